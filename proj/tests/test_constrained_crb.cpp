#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crbkit/constrained.hpp"
#include "crbkit/errors.hpp"
#include "crbkit/qmp.hpp"

#include "test_support.hpp"

#include <cmath>

using namespace crb;
namespace ts = test_support;

namespace {

Eigen::MatrixXd unit_col(Eigen::Index n, Eigen::Index k) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 1);
  b(k, 0) = 1.0;
  return b;
}

ConstrainedQmpProblem make_problem(const Eigen::MatrixXd& j, const Eigen::MatrixXd& b,
                                   const Eigen::MatrixXd& h) {
  return ConstrainedQmpProblem(SymMatrix(j), b, ConstraintSet(h));
}

}  // namespace

TEST_CASE("null_basis: closed-form two-dimensional cases") {
  const NullBasis u1 = null_basis(unit_col(2, 0));
  REQUIRE(u1.u.cols() == 1);
  CHECK(std::abs(std::abs(u1.u(1, 0)) - 1.0) <= 1e-15);
  CHECK(std::abs(u1.u(0, 0)) <= 1e-15);

  Eigen::MatrixXd h(2, 1);
  h << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const NullBasis u2 = null_basis(h);
  REQUIRE(u2.u.cols() == 1);
  // +- (1, -1)/sqrt(2)
  CHECK(std::abs(u2.u(0, 0) + u2.u(1, 0)) <= 1e-14);
  CHECK(std::abs(std::abs(u2.u(0, 0)) - 1.0 / std::sqrt(2.0)) <= 1e-14);
}

TEST_CASE("null_basis: invariants on a random instance") {
  std::mt19937_64 rng(301);
  const Eigen::MatrixXd h = ts::gaussian(6, 2, rng);
  const NullBasis nb = null_basis(h);
  REQUIRE(nb.u.rows() == 6);
  REQUIRE(nb.u.cols() == 4);
  CHECK((h.transpose() * nb.u).norm() <= 1e-12 * h.norm());
  CHECK((nb.u.transpose() * nb.u - Eigen::MatrixXd::Identity(4, 4)).norm() <= 1e-12);
  // deterministic for fixed input
  const NullBasis again = null_basis(h);
  CHECK((nb.u - again.u).norm() == 0.0);
}

TEST_CASE("null_basis and ConstraintSet reject rank-deficient H") {
  std::mt19937_64 rng(307);
  Eigen::MatrixXd h(5, 2);
  h.col(0) = ts::gaussian(5, 1, rng);
  h.col(1) = 2.0 * h.col(0);
  CHECK_THROWS_AS(null_basis(h), RankDeficientConstraints);
  CHECK_THROWS_AS(ConstraintSet{h}, RankDeficientConstraints);
}

TEST_CASE("constrained oracle: projection cases on the identity") {
  const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(2, 2);
  CHECK((constrained_crb_oracle(make_problem(j, unit_col(2, 1), unit_col(2, 0))) -
         unit_col(2, 1))
            .norm() <= 1e-14);
  CHECK(constrained_crb_oracle(make_problem(j, unit_col(2, 0), unit_col(2, 0))).norm() <=
        1e-14);
}

TEST_CASE("constrained oracle agrees with the nonsingular inverse formula") {
  std::mt19937_64 rng(311);
  const Eigen::MatrixXd j = ts::spd_with_condition(8, 50.0, rng);
  const ConstrainedQmpProblem prob =
      make_problem(j, unit_col(8, 0), Eigen::MatrixXd::Ones(8, 1));
  const Eigen::MatrixXd a = constrained_crb_oracle(prob);
  const Eigen::MatrixXd b = constrained_crb_inverse_formula(prob);
  CHECK(ts::rel_error(a, b) <= 1e-9);
}

TEST_CASE("two-formula identity across random instances") {
  std::mt19937_64 rng(313);
  for (int trial = 0; trial < 6; ++trial) {
    const Eigen::Index n = 10 + 8 * trial;
    const Eigen::Index p = 1 + trial % 5;
    const Eigen::MatrixXd j = ts::spd_with_condition(n, 100.0, rng);
    const Eigen::MatrixXd h = ts::gaussian(n, p, rng);
    const Eigen::MatrixXd b = ts::gaussian(n, 2, rng);
    const ConstrainedQmpProblem prob = make_problem(j, b, h);
    CHECK(ts::rel_error(constrained_crb_oracle(prob),
                        constrained_crb_inverse_formula(prob)) <= 1e-9);
  }
}

TEST_CASE("constrained oracle rejects a singular reduced Fisher matrix") {
  // J = e1 e1^T is PSD; with H = e1 the reduced matrix U^T J U vanishes.
  const Eigen::MatrixXd j = unit_col(3, 0) * unit_col(3, 0).transpose();
  CHECK_THROWS_AS(constrained_crb_oracle(make_problem(j, unit_col(3, 1), unit_col(3, 0))),
                  SingularReducedFisher);
}

TEST_CASE("oblique projector: idempotent and annihilates H^T") {
  std::mt19937_64 rng(317);
  const Eigen::MatrixXd h = ts::gaussian(7, 2, rng);
  const Preconditioner p =
      Preconditioner::diagonal(ts::gaussian(7, 1, rng).cwiseAbs().col(0) +
                               Eigen::VectorXd::Constant(7, 0.5));
  const Eigen::MatrixXd t = oblique_constraint_projector(p, h);
  CHECK((t * t - t).norm() <= 1e-12 * std::max(1.0, t.norm()));
  CHECK((h.transpose() * t).norm() <= 1e-12 * h.norm());
  // p = 0 gives the identity
  const Eigen::MatrixXd t0 = oblique_constraint_projector(p, Eigen::MatrixXd(7, 0));
  CHECK((t0 - Eigen::MatrixXd::Identity(7, 7)).norm() == 0.0);
}

TEST_CASE("constrained MM with p = 0 reduces to solve_mm") {
  std::mt19937_64 rng(331);
  const Eigen::MatrixXd j = ts::spd_with_condition(6, 30.0, rng);
  const Eigen::MatrixXd b = ts::gaussian(6, 1, rng);
  const Preconditioner p = Preconditioner::jacobi_scaled(SymMatrix(j));
  const StoppingRule stop = StoppingRule::residual_norm(1e-10, 10000);

  const SolveReport un = solve_mm(QmpProblem(SymMatrix(j), b), p, stop);
  const SolveReport con =
      solve_constrained_mm(make_problem(j, b, Eigen::MatrixXd(6, 0)), p, stop);
  REQUIRE(un.converged);
  REQUIRE(con.converged);
  CHECK(un.iterations == con.iterations);
  CHECK((un.x - con.x).norm() == 0.0);
  REQUIRE(un.bound_trajectory.size() == con.bound_trajectory.size());
  for (std::size_t k = 0; k < un.bound_trajectory.size(); ++k) {
    CHECK(un.bound_trajectory[k] == con.bound_trajectory[k]);
    CHECK(con.objective_trajectory[k] ==
          doctest::Approx(un.objective_trajectory[k]).epsilon(1e-12));
  }
}

TEST_CASE("constrained MM: two-dimensional closed form in one step") {
  const ConstrainedQmpProblem prob = make_problem(
      Eigen::MatrixXd::Identity(2, 2), unit_col(2, 0), Eigen::MatrixXd::Ones(2, 1));
  const SolveReport rep = solve_constrained_mm(prob, Preconditioner::identity(2),
                                               StoppingRule::residual_norm(1e-14, 100));
  CHECK(rep.converged);
  CHECK(rep.iterations <= 2);
  CHECK(rep.x(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.x(1, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(ts::rel_error(rep.x, constrained_crb_oracle(prob)) <= 1e-12);
}

TEST_CASE("constrained MM: monotone objective and bound, oracle agreement") {
  std::mt19937_64 rng(337);
  const Eigen::Index n = 30;
  const Eigen::MatrixXd j = ts::spd_with_condition(n, 100.0, rng);
  const ConstrainedQmpProblem prob =
      make_problem(j, unit_col(n, 0), Eigen::MatrixXd::Ones(n, 1));
  const SolveReport rep =
      solve_constrained_mm(prob, Preconditioner::diagonally_dominant(prob.j),
                           StoppingRule::residual_norm(1e-10, 200000));
  REQUIRE(rep.converged);
  CHECK(ts::rel_error(rep.x, constrained_crb_oracle(prob)) <= 1e-6);
  for (std::size_t k = 1; k < rep.objective_trajectory.size(); ++k) {
    CHECK(rep.objective_trajectory[k] <= rep.objective_trajectory[k - 1] + 1e-12);
    CHECK(rep.bound_trajectory[k] >= rep.bound_trajectory[k - 1] - 1e-12);
  }
}

TEST_CASE("constrained MM: feasibility handling of a bad start") {
  std::mt19937_64 rng(347);
  const Eigen::MatrixXd j = ts::spd_with_condition(5, 10.0, rng);
  const ConstrainedQmpProblem prob =
      make_problem(j, unit_col(5, 0), Eigen::MatrixXd::Ones(5, 1));
  const Eigen::MatrixXd bad_start = Eigen::MatrixXd::Ones(5, 1);

  SolverOptions strict;
  strict.strict_feasibility = true;
  CHECK_THROWS_AS(solve_constrained_mm(prob, Preconditioner::identity(5), bad_start,
                                       StoppingRule::residual_norm(1e-10, 1000), strict),
                  InfeasibleStart);

  // default: projected with a warning, still converges to the oracle
  const SolveReport rep =
      solve_constrained_mm(prob, Preconditioner::jacobi_scaled(prob.j), bad_start,
                           StoppingRule::residual_norm(1e-10, 100000));
  REQUIRE(rep.converged);
  CHECK(ts::rel_error(rep.x, constrained_crb_oracle(prob)) <= 1e-6);
}

TEST_CASE("constrained PCG with p = 0 matches unconstrained PCG") {
  std::mt19937_64 rng(349);
  const Eigen::MatrixXd j = ts::spd_with_condition(6, 40.0, rng);
  const Eigen::MatrixXd b = ts::gaussian(6, 1, rng);
  const Preconditioner p = Preconditioner::diagonal_of(SymMatrix(j));
  const StoppingRule stop = StoppingRule::residual_norm(1e-10, 1000);

  const SolveReport un = solve_gd(QmpProblem(SymMatrix(j), b), DirectionRule::pcg(p), stop);
  const SolveReport con =
      solve_constrained_pcg(make_problem(j, b, Eigen::MatrixXd(6, 0)), p, stop);
  REQUIRE(un.converged);
  REQUIRE(con.converged);
  CHECK(un.iterations == con.iterations);
  CHECK((un.x - con.x).norm() <= 1e-14 * un.x.norm());
}

TEST_CASE("constrained PCG: reduced dimension one converges immediately") {
  Eigen::VectorXd d(2);
  d << 1, 2;
  const ConstrainedQmpProblem prob = make_problem(
      Eigen::MatrixXd(d.asDiagonal()), unit_col(2, 0), Eigen::MatrixXd::Ones(2, 1));
  const SolveReport rep = solve_constrained_pcg(prob, Preconditioner::identity(2),
                                                StoppingRule::residual_norm(1e-12, 10));
  CHECK(rep.converged);
  CHECK(rep.iterations <= 1);
  CHECK(rep.x(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  CHECK(rep.x(1, 0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("constrained PCG: iterates stay feasible") {
  std::mt19937_64 rng(353);
  const Eigen::Index n = 40;
  const Eigen::MatrixXd j = ts::spd_with_condition(n, 1e3, rng);
  const Eigen::MatrixXd h = ts::gaussian(n, 3, rng);
  const ConstrainedQmpProblem prob = make_problem(j, unit_col(n, 0), h);
  SolverOptions opts;
  opts.record_iterates = true;
  const SolveReport rep =
      solve_constrained_pcg(prob, Preconditioner::jacobi_scaled(prob.j),
                            StoppingRule::residual_norm(1e-10, 10000), opts);
  REQUIRE(rep.converged);
  for (const auto& x : rep.iterate_history) {
    CHECK((h.transpose() * x).norm() <= 1e-10 * h.norm() * std::max(1.0, x.norm()));
  }
  CHECK(ts::rel_error(rep.x, constrained_crb_oracle(prob)) <= 1e-6);
}

TEST_CASE("reduced-space and projected PCG agree") {
  std::mt19937_64 rng(359);
  const Eigen::Index n = 25;
  const Eigen::MatrixXd j = ts::spd_with_condition(n, 100.0, rng);
  const Eigen::MatrixXd h = ts::gaussian(n, 2, rng);
  const ConstrainedQmpProblem prob = make_problem(j, unit_col(n, 2), h);
  const Preconditioner p = Preconditioner::jacobi_scaled(prob.j);
  const StoppingRule stop = StoppingRule::residual_norm(1e-11, 10000);
  const SolveReport reduced = solve_constrained_pcg(prob, p, stop);
  const SolveReport projected = solve_constrained_pcg_projected(
      prob, p, Eigen::MatrixXd::Zero(n, 1), stop);
  REQUIRE(reduced.converged);
  REQUIRE(projected.converged);
  const Eigen::MatrixXd oracle = constrained_crb_oracle(prob);
  CHECK(ts::rel_error(reduced.x, oracle) <= 1e-8);
  CHECK(ts::rel_error(projected.x, oracle) <= 1e-8);
}

TEST_CASE("all constrained solvers reach the oracle on random instances") {
  std::mt19937_64 rng(367);
  for (int trial = 0; trial < 3; ++trial) {
    const Eigen::Index n = 20 + 40 * trial;
    const Eigen::Index p_count = 1 + 2 * trial;
    const Eigen::MatrixXd j = ts::spd_with_condition(n, 50.0, rng);
    const Eigen::MatrixXd h = ts::gaussian(n, p_count, rng);
    const ConstrainedQmpProblem prob = make_problem(j, unit_col(n, 0), h);
    const Eigen::MatrixXd oracle = constrained_crb_oracle(prob);
    const Preconditioner p = Preconditioner::jacobi_scaled(prob.j);
    const StoppingRule stop = StoppingRule::residual_norm(1e-10, 500000);

    CHECK(ts::rel_error(solve_constrained_mm(prob, p, stop).x, oracle) <= 1e-6);
    CHECK(ts::rel_error(solve_constrained_pcg(prob, p, stop).x, oracle) <= 1e-6);
  }
}

TEST_CASE("constraints never increase the diagonal CRB entries") {
  std::mt19937_64 rng(373);
  const Eigen::Index n = 12;
  const Eigen::MatrixXd j = ts::spd_with_condition(n, 100.0, rng);
  const Eigen::MatrixXd h = ts::gaussian(n, 2, rng);
  const ConstrainedQmpProblem prob =
      make_problem(j, Eigen::MatrixXd::Identity(n, n), h);
  const Eigen::MatrixXd constrained = constrained_crb_oracle(prob);
  const Eigen::MatrixXd unconstrained = prob.j.direct_solve(Eigen::MatrixXd::Identity(n, n));
  for (Eigen::Index i = 0; i < n; ++i) {
    CHECK(constrained(i, i) <= unconstrained(i, i) + 1e-10);
  }
}

TEST_CASE("gradient projection: trivial and well-conditioned cases") {
  const ConstrainedQmpProblem trivial = make_problem(
      Eigen::MatrixXd::Identity(3, 3), unit_col(3, 0), Eigen::MatrixXd(3, 0));
  const SolveReport r1 = solve_gradient_projection(trivial, Preconditioner::identity(3),
                                                   StoppingRule::residual_norm(1e-12, 100));
  CHECK(r1.converged);
  CHECK(r1.iterations == 1);

  std::mt19937_64 rng(379);
  const Eigen::Index n = 10;
  const Eigen::MatrixXd j = ts::spd_with_condition(n, 8.0, rng);
  const ConstrainedQmpProblem prob =
      make_problem(j, unit_col(n, 0), Eigen::MatrixXd::Ones(n, 1));
  const SolveReport r2 =
      solve_gradient_projection(prob, Preconditioner::jacobi_scaled(prob.j),
                                StoppingRule::residual_norm(1e-8, 100000));
  REQUIRE(r2.converged);
  CHECK(ts::rel_error(r2.x, constrained_crb_oracle(prob)) <= 1e-6);
}

TEST_CASE("gradient projection stalls out on an ill-conditioned instance") {
  std::mt19937_64 rng(383);
  const Eigen::Index n = 30;
  const Eigen::MatrixXd j = ts::spd_with_condition(n, 1e6, rng);
  const ConstrainedQmpProblem prob =
      make_problem(j, unit_col(n, 0), Eigen::MatrixXd::Ones(n, 1));
  const SolveReport rep =
      solve_gradient_projection(prob, Preconditioner::identity(n),
                                StoppingRule::residual_norm(1e-9, 300));
  CHECK_FALSE(rep.converged);
  CHECK((rep.status == SolveStatus::max_iterations ||
         rep.status == SolveStatus::stalled || rep.status == SolveStatus::diverged));
}

TEST_CASE("gs composition: identity instance after one sweep") {
  const SymMatrix j = SymMatrix::identity(4);
  const SolveReport rep = gs_two_solve_composition(j, Eigen::VectorXd::Unit(4, 0),
                                                   StoppingRule::residual_norm(1e-12, 10));
  CHECK(rep.converged);
  CHECK(rep.iterations <= 1);
  const ConstrainedQmpProblem prob = make_problem(
      Eigen::MatrixXd::Identity(4, 4), unit_col(4, 0), Eigen::MatrixXd::Ones(4, 1));
  CHECK(ts::rel_error(rep.x, constrained_crb_oracle(prob)) <= 1e-12);
}

TEST_CASE("gs composition converges to the constrained oracle") {
  Eigen::VectorXd d(2);
  d << 1, 2;
  const SymMatrix j = SymMatrix::from_diagonal(d);
  const SolveReport rep = gs_two_solve_composition(j, Eigen::VectorXd::Unit(2, 0),
                                                   StoppingRule::residual_norm(1e-12, 1000));
  REQUIRE(rep.converged);
  const ConstrainedQmpProblem prob = make_problem(
      Eigen::MatrixXd(d.asDiagonal()), unit_col(2, 0), Eigen::MatrixXd::Ones(2, 1));
  CHECK(ts::rel_error(rep.x, constrained_crb_oracle(prob)) <= 1e-8);

  std::mt19937_64 rng(389);
  const Eigen::Index n = 20;
  const Eigen::MatrixXd jr = ts::spd_with_condition(n, 30.0, rng);
  const SolveReport rep2 = gs_two_solve_composition(
      SymMatrix(jr), Eigen::VectorXd::Unit(n, 0), StoppingRule::residual_norm(1e-10, 100000));
  REQUIRE(rep2.converged);
  const ConstrainedQmpProblem prob2 =
      make_problem(jr, unit_col(n, 0), Eigen::MatrixXd::Ones(n, 1));
  CHECK(ts::rel_error(rep2.x, constrained_crb_oracle(prob2)) <= 1e-6);
}

TEST_CASE("fully constrained problem collapses to zero") {
  Eigen::MatrixXd h(1, 1);
  h << 1.0;
  const ConstrainedQmpProblem prob =
      make_problem(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Ones(1, 1), h);
  CHECK(constrained_crb_oracle(prob).norm() == 0.0);
  const SolveReport rep = solve_constrained_pcg(prob, Preconditioner::identity(1),
                                                StoppingRule::residual_norm(1e-10, 10));
  CHECK(rep.converged);
  CHECK(rep.iterations == 0);
  CHECK(rep.x.norm() == 0.0);
}
