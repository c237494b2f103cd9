#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crbkit/errors.hpp"
#include "crbkit/singular.hpp"

#include "test_support.hpp"

#include <Eigen/Eigenvalues>

using namespace crb;
namespace ts = test_support;

namespace {

SingularProblem make_problem(const Eigen::MatrixXd& j, const Eigen::MatrixXd& b,
                             double range_tol = 1e-8) {
  return SingularProblem(SymMatrix(j), b, range_tol);
}

}  // namespace

TEST_CASE("landweber: identity and decoupled singular cases") {
  const SingularProblem ident =
      make_problem(Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Identity(3, 3).col(0));
  const SolveReport r1 =
      solve_landweber(ident, std::nullopt, StoppingRule::residual_norm(1e-12, 1000));
  CHECK(r1.converged);
  CHECK((r1.x - Eigen::MatrixXd::Identity(3, 3).col(0)).norm() <= 1e-12);

  Eigen::VectorXd d(2);
  d << 1, 0;
  Eigen::MatrixXd b(2, 1);
  b << 1, 0;
  const SingularProblem decoupled = make_problem(Eigen::MatrixXd(d.asDiagonal()), b);
  SolverOptions opts;
  opts.record_iterates = true;
  const SolveReport r2 = solve_landweber(decoupled, std::nullopt,
                                         StoppingRule::residual_norm(1e-12, 5000), opts);
  CHECK(r2.converged);
  CHECK(r2.x(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  for (const auto& x : r2.iterate_history) {
    CHECK(x(1, 0) == 0.0);  // the kernel coordinate never moves from x0 = 0
  }
}

TEST_CASE("landweber matches the pseudoinverse oracle on rank-deficient instances") {
  std::mt19937_64 rng(211);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(6, 3, 20.0, rng);
  const Eigen::MatrixXd y = ts::gaussian(6, 1, rng);
  const Eigen::MatrixXd b = j * y;  // b in range(J)
  const SingularProblem prob = make_problem(j, b);
  const SolveReport rep =
      solve_landweber(prob, std::nullopt, StoppingRule::residual_norm(1e-12, 200000));
  REQUIRE(rep.converged);
  const Eigen::MatrixXd oracle = prob.j.pseudoinverse_apply(b);
  CHECK(ts::rel_error(rep.x, oracle) <= 1e-7);
}

TEST_CASE("landweber rejects a step below the spectral bound") {
  std::mt19937_64 rng(223);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(5, 3, 10.0, rng);
  const Eigen::MatrixXd b = j * ts::gaussian(5, 1, rng);
  const SingularProblem prob = make_problem(j, b);
  CHECK_THROWS_AS(solve_landweber(prob, 0.1,  // lambda_1 = 1, so nu must be >= 1
                                  StoppingRule::residual_norm(1e-10, 100)),
                  InvalidStep);
}

TEST_CASE("landweber diagnoses b outside range(J)") {
  std::mt19937_64 rng(227);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(6, 3, 5.0, rng);
  // component outside range: project a random vector onto the kernel
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  Eigen::VectorXd kernel_dir = es.eigenvectors().col(0);  // eigenvalue 0
  const Eigen::MatrixXd b = j * ts::gaussian(6, 1, rng) + 0.5 * kernel_dir;
  const SingularProblem prob = make_problem(j, b, 1e-6);
  CHECK_THROWS_AS(solve_landweber(prob, std::nullopt,
                                  StoppingRule::residual_norm(1e-12, 100000)),
                  NotInRange);
}

TEST_CASE("landweber: nonzero x0 requires the explicit opt-in") {
  std::mt19937_64 rng(229);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(5, 3, 5.0, rng);
  const Eigen::MatrixXd b = j * ts::gaussian(5, 1, rng);
  const SingularProblem prob = make_problem(j, b);
  const Eigen::MatrixXd x0 = ts::gaussian(5, 1, rng);
  CHECK_THROWS_AS(solve_landweber(prob, std::nullopt, x0,
                                  StoppingRule::residual_norm(1e-10, 100)),
                  InvalidStep);

  // with the opt-in, the limit is J^+ b + (I - J^+ J) x0
  SolverOptions opts;
  opts.allow_nonzero_start = true;
  const SolveReport rep = solve_landweber(prob, std::nullopt, x0,
                                          StoppingRule::residual_norm(1e-12, 200000), opts);
  REQUIRE(rep.converged);
  const Eigen::MatrixXd pinv_b = prob.j.pseudoinverse_apply(b);
  const Eigen::MatrixXd kernel_part =
      x0 - prob.j.pseudoinverse_apply(Eigen::MatrixXd(j * x0));
  CHECK(ts::rel_error(rep.x, pinv_b + kernel_part) <= 1e-7);
}

TEST_CASE("minimum-norm property against explicit null-space perturbations") {
  std::mt19937_64 rng(233);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(8, 5, 10.0, rng);
  const Eigen::MatrixXd b = j * ts::gaussian(8, 1, rng);
  const SingularProblem prob = make_problem(j, b);
  const SolveReport rep =
      solve_landweber(prob, std::nullopt, StoppingRule::residual_norm(1e-12, 300000));
  REQUIRE(rep.converged);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd perturbation = Eigen::VectorXd::Zero(8);
    for (Eigen::Index i = 0; i < 8; ++i) {
      if (es.eigenvalues()(i) < 1e-10) {
        perturbation += ts::gaussian(1, 1, rng)(0, 0) * es.eigenvectors().col(i);
      }
    }
    const Eigen::VectorXd competitor = rep.x.col(0) + perturbation;
    CHECK(rep.x.col(0).norm() <= competitor.norm() + 1e-8);
  }
}

TEST_CASE("iterates stay in range(J) from x0 = 0") {
  std::mt19937_64 rng(239);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(6, 4, 10.0, rng);
  const Eigen::MatrixXd b = j * ts::gaussian(6, 1, rng);
  const SingularProblem prob = make_problem(j, b);
  SolverOptions opts;
  opts.record_iterates = true;
  const SolveReport rep = solve_landweber(prob, std::nullopt,
                                          StoppingRule::residual_norm(1e-11, 100000), opts);
  REQUIRE(rep.converged);
  for (const auto& x : rep.iterate_history) {
    const Eigen::MatrixXd projected =
        prob.j.pseudoinverse_apply(Eigen::MatrixXd(j * x));  // J J^+ (J x) = J x path
    CHECK((x - projected).norm() <= 1e-10 * std::max(1.0, x.norm()));
  }
}

TEST_CASE("normal MM with P = nu I reproduces Landweber exactly") {
  std::mt19937_64 rng(241);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(6, 4, 10.0, rng);
  const Eigen::MatrixXd b = j * ts::gaussian(6, 1, rng);
  const SingularProblem prob = make_problem(j, b);

  const double nu = 1.01;  // spectra normalized to lambda_1 = 1 in the generator
  const SolveReport lw = solve_landweber(prob, nu, StoppingRule::residual_norm(1e-10, 50000));
  const Preconditioner p = Preconditioner::diagonal(Eigen::VectorXd::Constant(6, nu));
  const SolveReport mm = solve_normal_mm(prob, p, StoppingRule::residual_norm(1e-10, 50000));
  REQUIRE(lw.converged);
  REQUIRE(mm.converged);
  CHECK(lw.iterations == mm.iterations);
  CHECK((lw.x - mm.x).norm() == 0.0);
  REQUIRE(lw.residual_trajectory.size() == mm.residual_trajectory.size());
  for (std::size_t k = 0; k < lw.residual_trajectory.size(); ++k) {
    CHECK(lw.residual_trajectory[k] == mm.residual_trajectory[k]);
  }
}

TEST_CASE("normal MM: degenerate zero problem converges in zero iterations") {
  const SingularProblem prob = make_problem(Eigen::MatrixXd::Zero(3, 3),
                                            Eigen::MatrixXd::Zero(3, 1));
  const SolveReport rep = solve_normal_mm(prob, Preconditioner::identity(3),
                                          StoppingRule::residual_norm(1e-10, 100));
  CHECK(rep.converged);
  CHECK(rep.iterations == 0);
  CHECK(rep.x.norm() == 0.0);
}

TEST_CASE("normal MM, general majorizer: minimum norm when P^{-1} preserves range(J)") {
  // A diagonal J keeps range(J) axis-aligned, so any diagonal P qualifies.
  std::mt19937_64 rng(251);
  Eigen::VectorXd d(8);
  d << 1.0, 0.8, 0.5, 0.3, 0.2, 0.0, 0.0, 0.0;
  const Eigen::MatrixXd j = Eigen::MatrixXd(d.asDiagonal());
  const Eigen::MatrixXd b = j * ts::gaussian(8, 2, rng);
  const SingularProblem prob = make_problem(j, b);
  const Eigen::MatrixXd j2 = j * j;
  const Preconditioner p = Preconditioner::diagonal(
      Eigen::VectorXd(j2.cwiseAbs().rowwise().sum()) +
      Eigen::VectorXd::Constant(8, 1e-3));  // DD majorizer of J^2 plus margin
  SolverOptions opts;
  opts.validate_majorizer = true;
  const SolveReport rep = solve_normal_mm(prob, p,
                                          StoppingRule::residual_norm(1e-12, 500000), opts);
  REQUIRE(rep.converged);
  CHECK(ts::rel_error(rep.x, prob.j.pseudoinverse_apply(b)) <= 1e-7);
}

TEST_CASE("normal MM, non-commuting majorizer: solves J X = B, kernel may shift") {
  std::mt19937_64 rng(252);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(8, 5, 10.0, rng);
  const Eigen::MatrixXd b = j * ts::gaussian(8, 2, rng);
  const SingularProblem prob = make_problem(j, b);
  const Eigen::MatrixXd j2 = j * j;
  const Preconditioner p = Preconditioner::diagonal(
      Eigen::VectorXd(j2.cwiseAbs().rowwise().sum()) +
      Eigen::VectorXd::Constant(8, 1e-3));
  const SolveReport rep = solve_normal_mm(prob, p,
                                          StoppingRule::residual_norm(1e-12, 500000));
  REQUIRE(rep.converged);
  // the residual contract holds even though the limit need not be J^+ B
  CHECK((j * rep.x - b).norm() <= 1e-10 * b.norm());
  const Eigen::MatrixXd range_part = prob.j.pseudoinverse_apply(Eigen::MatrixXd(j * rep.x));
  CHECK(ts::rel_error(range_part, prob.j.pseudoinverse_apply(b)) <= 1e-8);
}

TEST_CASE("cg on the normal equations: trivial cases") {
  const SingularProblem ident =
      make_problem(Eigen::MatrixXd::Identity(4, 4), Eigen::MatrixXd::Identity(4, 4).col(1));
  const SolveReport r1 =
      solve_cg_normal(ident, StoppingRule::residual_norm(1e-12, 100));
  CHECK(r1.converged);
  CHECK(r1.iterations == 1);

  Eigen::VectorXd d(3);
  d << 2, 1, 0;
  Eigen::MatrixXd b(3, 1);
  b << 2, 1, 0;
  const SingularProblem decoupled = make_problem(Eigen::MatrixXd(d.asDiagonal()), b);
  const SolveReport r2 =
      solve_cg_normal(decoupled, StoppingRule::residual_norm(1e-12, 100));
  CHECK(r2.converged);
  Eigen::VectorXd want(3);
  want << 1, 1, 0;
  CHECK((r2.x.col(0) - want).norm() <= 1e-10);
}

TEST_CASE("cg-normal needs fewer iterations than Landweber") {
  std::mt19937_64 rng(257);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(10, 7, 30.0, rng);
  const Eigen::MatrixXd b = j * ts::gaussian(10, 1, rng);
  const SingularProblem prob = make_problem(j, b);
  const StoppingRule stop = StoppingRule::residual_norm(1e-10, 500000);
  const SolveReport cg = solve_cg_normal(prob, stop);
  const SolveReport lw = solve_landweber(prob, std::nullopt, stop);
  REQUIRE(cg.converged);
  REQUIRE(lw.converged);
  CHECK(cg.iterations < lw.iterations);
  CHECK(ts::rel_error(cg.x, prob.j.pseudoinverse_apply(b)) <= 1e-7);
}

TEST_CASE("on nonsingular J the singular solvers agree with direct_solve") {
  std::mt19937_64 rng(263);
  const Eigen::MatrixXd j = ts::spd_with_condition(7, 20.0, rng);
  const Eigen::MatrixXd b = ts::gaussian(7, 1, rng);
  const SingularProblem prob = make_problem(j, b);
  const Eigen::MatrixXd direct = prob.j.direct_solve(b);
  const SolveReport lw =
      solve_landweber(prob, std::nullopt, StoppingRule::residual_norm(1e-12, 200000));
  const SolveReport cg = solve_cg_normal(prob, StoppingRule::residual_norm(1e-12, 10000));
  REQUIRE(lw.converged);
  REQUIRE(cg.converged);
  CHECK(ts::rel_error(lw.x, direct) <= 1e-8);
  CHECK(ts::rel_error(cg.x, direct) <= 1e-8);
}

TEST_CASE("normal-equation objective is the least-squares residual") {
  std::mt19937_64 rng(269);
  const Eigen::MatrixXd j = ts::rank_deficient_psd(6, 4, 10.0, rng);
  const Eigen::MatrixXd b = j * ts::gaussian(6, 1, rng);
  const SingularProblem prob = make_problem(j, b);
  const SolveReport rep =
      solve_landweber(prob, std::nullopt, StoppingRule::residual_norm(1e-10, 100000));
  REQUIRE(rep.converged);
  CHECK(rep.objective_trajectory.front() == doctest::Approx(0.5 * b.squaredNorm()));
  // monotone nonincreasing under the P >= J^2 majorization
  for (std::size_t k = 1; k < rep.objective_trajectory.size(); ++k) {
    CHECK(rep.objective_trajectory[k] <=
          rep.objective_trajectory[k - 1] + 1e-12 * std::max(1.0, rep.objective_trajectory[k - 1]));
  }
}
