#include "crbkit/singular.hpp"

#include "crbkit/errors.hpp"
#include "crbkit/spectral.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace crb {

namespace {

// Residual stagnation window for the not-in-range diagnosis: the run is
// declared NotInRange when the relative residual sits above range_tol and
// improved by less than this fraction over the last 50 iterations.
constexpr long kStagnationWindow = 50;
constexpr double kStagnationImprovement = 1e-9;

struct NormalRecorder {
  SolveReport* rep;
  const Eigen::MatrixXd* b;
  double b_norm;
  bool record_iterates;

  double objective = 0.0;
  double prev_objective = 0.0;
  double bound = 0.0;
  double residual = 0.0;

  void record(const Eigen::MatrixXd& x, const Eigen::MatrixXd& r) {
    prev_objective = objective;
    bound = (b->array() * x.array()).sum();
    const double rnorm = r.norm();
    objective = 0.5 * rnorm * rnorm;
    residual = b_norm > 0.0 ? rnorm / b_norm : rnorm;
    rep->objective_trajectory.push_back(objective);
    rep->bound_trajectory.push_back(bound);
    rep->residual_trajectory.push_back(residual);
    if (record_iterates) rep->iterate_history.push_back(x);
    rep->flops += 4ull * static_cast<std::uint64_t>(x.size());
  }

  IterationState state(long k) const {
    IterationState s;
    s.iteration = k;
    s.objective_delta = k >= 1 ? std::abs(objective - prev_objective) : -1.0;
    s.relative_residual = residual;
    s.bound = bound;
    return s;
  }
};

void check_start(const SingularProblem& prob, const Eigen::MatrixXd& x0,
                 const SolverOptions& opts) {
  if (x0.rows() != prob.size() || x0.cols() != prob.rhs_count()) {
    throw DimensionMismatch("x0 shape does not match the problem");
  }
  if (!opts.allow_nonzero_start && x0.norm() != 0.0) {
    throw InvalidStep(
        "nonzero x0 forfeits the minimum-norm guarantee; set "
        "SolverOptions::allow_nonzero_start to override");
  }
}

void check_stagnation(const SolveReport& rep, double range_tol, long k) {
  if (k < kStagnationWindow) return;
  const double now = rep.residual_trajectory.back();
  const double before =
      rep.residual_trajectory[rep.residual_trajectory.size() - 1 - kStagnationWindow];
  if (now > range_tol && before > 0.0 &&
      (1.0 - now / before) < kStagnationImprovement) {
    throw NotInRange(
        "residual stalled above range_tol: right-hand side is not in range(J)");
  }
}

// Root convergence factor of the normal-equation splitting: spectral radius
// of I - P^{-1} J^2 on the subspace reachable from a range(J) start, which is
// where the error dynamics of the x0 = 0 iteration live.
double normal_iteration_radius(const SingularProblem& prob, const Preconditioner& p,
                               const SolverOptions& opts) {
  const Eigen::VectorXd w = detail::seeded_unit_vector(prob.size(), opts.seed);
  Eigen::VectorXd start = prob.j.matvec(w);
  if (start.norm() == 0.0) return 0.0;
  Eigen::VectorXd jv(prob.size()), j2v(prob.size());
  const LinearOperator apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
    jv = prob.j.matvec(v);
    j2v = prob.j.matvec(jv);
    y = v - p.apply_inverse(j2v);
  };
  PowerOptions popts;
  popts.seed = opts.seed;
  return operator_spectral_radius(apply, start, popts).value;
}

// Shared loop for Landweber (P = nu I) and the general normal-equation MM.
SolveReport normal_mm_loop(const SingularProblem& prob, const Preconditioner& p,
                           const Eigen::MatrixXd& x0, const StoppingRule& stop,
                           const SolverOptions& opts, double rho_predicted) {
  const Eigen::Index n = prob.size();
  const std::uint64_t m = static_cast<std::uint64_t>(prob.rhs_count());

  SolveReport rep;
  rep.rho_predicted = rho_predicted;

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd jx(n, prob.rhs_count());
  Eigen::MatrixXd r(n, prob.rhs_count());
  Eigen::MatrixXd jr(n, prob.rhs_count());
  Eigen::MatrixXd step(n, prob.rhs_count());

  prob.j.matvec_into(x, jx);
  r = prob.b - jx;
  rep.flops += 2ull * n * n * m + n * m;

  NormalRecorder rec{&rep, &prob.b, prob.b.norm(), opts.record_iterates};
  rec.record(x, r);

  if (stop.max_iters() == 0) {
    rep.x = std::move(x);
    rep.iterations = 0;
    rep.converged = false;
    rep.status = SolveStatus::max_iterations;
    return rep;
  }
  if (r.norm() == 0.0 || stop.satisfied(rec.state(0))) {
    rep.x = std::move(x);
    rep.iterations = 0;
    rep.converged = true;
    rep.status = SolveStatus::converged;
    return rep;
  }

  const std::uint64_t per_iter = 4ull * n * n * m + 2ull * n * m +
                                 m * p.apply_inverse_flops_per_column();
  long k = 0;
  bool converged = false;
  while (k < stop.max_iters()) {
    ++k;
    prob.j.matvec_into(r, jr);
    p.apply_inverse_into(jr, step);
    x += step;
    prob.j.matvec_into(x, jx);
    r = prob.b - jx;
    rep.flops += per_iter;
    rec.record(x, r);
    if (rec.objective >
        rec.prev_objective + 1e-8 * std::max(1.0, std::abs(rec.prev_objective))) {
      throw MonotonicityViolation(
          "normal-equation MM objective increased: P >= J^2 is violated");
    }
    check_stagnation(rep, prob.range_tol, k);
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  rep.x = std::move(x);
  rep.iterations = k;
  rep.converged = converged;
  rep.status = converged ? SolveStatus::converged : SolveStatus::max_iterations;
  return rep;
}

}  // namespace

SingularProblem::SingularProblem(SymMatrix j_in, Eigen::MatrixXd b_in,
                                 double range_tol_in)
    : j(std::move(j_in)), b(std::move(b_in)), range_tol(range_tol_in) {
  if (b.rows() != j.size() || b.cols() < 1) {
    throw DimensionMismatch("B must be n x m with m >= 1");
  }
  if (range_tol <= 0.0) {
    throw Error("range_tol must be positive");
  }
}

SolveReport solve_landweber(const SingularProblem& prob, std::optional<double> nu,
                            const Eigen::MatrixXd& x0, const StoppingRule& stop,
                            const SolverOptions& opts) {
  check_start(prob, x0, opts);
  PowerOptions popts;
  popts.seed = opts.seed;
  const SpectralSummary s = power_extremes(prob.j, popts);
  const double lambda1_sq = s.spectral_radius * s.spectral_radius;
  double step = 0.0;
  if (nu) {
    if (*nu < lambda1_sq) {
      throw InvalidStep("Landweber nu is below the lambda_1(J^2) estimate");
    }
    step = *nu;
  } else {
    step = 1.01 * lambda1_sq;
  }
  if (step <= 0.0) step = 1.0;  // J = 0: any positive step is valid

  const Preconditioner p =
      Preconditioner::diagonal(Eigen::VectorXd::Constant(prob.size(), step));
  const double rho = opts.compute_rho
                         ? normal_iteration_radius(prob, p, opts)
                         : std::numeric_limits<double>::quiet_NaN();
  return normal_mm_loop(prob, p, x0, stop, opts, rho);
}

SolveReport solve_landweber(const SingularProblem& prob, std::optional<double> nu,
                            const StoppingRule& stop, const SolverOptions& opts) {
  return solve_landweber(prob, nu,
                         Eigen::MatrixXd::Zero(prob.size(), prob.rhs_count()),
                         stop, opts);
}

SolveReport solve_normal_mm(const SingularProblem& prob, const Preconditioner& p,
                            const Eigen::MatrixXd& x0, const StoppingRule& stop,
                            const SolverOptions& opts) {
  check_start(prob, x0, opts);
  if (p.size() != prob.size()) {
    throw DimensionMismatch("preconditioner size does not match the problem");
  }
  if (opts.validate_majorizer) {
    const Eigen::MatrixXd j2 = prob.j.dense() * prob.j.dense();
    const SymMatrix gap(p.materialize() - j2);
    PowerOptions popts;
    popts.seed = opts.seed;
    const SpectralSummary s = power_extremes(gap, popts);
    const double scale = SymMatrix(j2).dense().norm();
    if (s.lambda_min < -1e-10 * std::max(scale, 1.0)) {
      throw MonotonicityViolation("preconditioner does not majorize J^2");
    }
  }
  const double rho = opts.compute_rho
                         ? normal_iteration_radius(prob, p, opts)
                         : std::numeric_limits<double>::quiet_NaN();
  return normal_mm_loop(prob, p, x0, stop, opts, rho);
}

SolveReport solve_normal_mm(const SingularProblem& prob, const Preconditioner& p,
                            const StoppingRule& stop, const SolverOptions& opts) {
  return solve_normal_mm(prob, p,
                         Eigen::MatrixXd::Zero(prob.size(), prob.rhs_count()),
                         stop, opts);
}

SolveReport solve_cg_normal(const SingularProblem& prob, const Eigen::MatrixXd& x0,
                            const StoppingRule& stop, const SolverOptions& opts) {
  check_start(prob, x0, opts);
  const Eigen::Index n = prob.size();
  const Eigen::Index m = prob.rhs_count();

  SolveReport rep;

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd r_data = prob.b - prob.j.matvec(x);
  rep.flops += 2ull * n * n * m + n * m;

  NormalRecorder rec{&rep, &prob.b, prob.b.norm(), opts.record_iterates};
  rec.record(x, r_data);

  if (stop.max_iters() == 0) {
    rep.x = std::move(x);
    rep.iterations = 0;
    rep.converged = false;
    rep.status = SolveStatus::max_iterations;
    return rep;
  }
  if (r_data.norm() == 0.0 || stop.satisfied(rec.state(0))) {
    rep.x = std::move(x);
    rep.iterations = 0;
    rep.converged = true;
    rep.status = SolveStatus::converged;
    return rep;
  }

  // CG state on the normal equations J^2 x = J b, per column.
  struct Column {
    Eigen::VectorXd x, rn, d;
    double rr = 0.0;
    bool frozen = false;
  };
  std::vector<Column> cols(static_cast<std::size_t>(m));
  for (Eigen::Index c = 0; c < m; ++c) {
    Column& col = cols[static_cast<std::size_t>(c)];
    col.x = x.col(c);
    col.rn = prob.j.matvec(Eigen::VectorXd(r_data.col(c)));  // J b - J^2 x
    col.d = col.rn;
    col.rr = col.rn.squaredNorm();
    col.frozen = std::sqrt(col.rr) <= 1e-300;
  }
  rep.flops += 2ull * n * n * m;

  long k = 0;
  bool converged = false;
  Eigen::VectorXd jd(n), q(n);
  while (k < stop.max_iters()) {
    ++k;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      Column& col = cols[c];
      if (col.frozen) continue;
      jd = prob.j.matvec(col.d);
      q = prob.j.matvec(jd);  // J^2 d
      const double dq = col.d.dot(q);
      if (dq <= 0.0) {
        col.frozen = true;
        continue;
      }
      const double omega = col.rr / dq;
      col.x += omega * col.d;
      col.rn -= omega * q;
      const double rr_new = col.rn.squaredNorm();
      const double beta = col.rr > 0.0 ? rr_new / col.rr : 0.0;
      col.d = col.rn + beta * col.d;
      col.rr = rr_new;
      rep.flops += 4ull * n * n + 12ull * n;
      if (std::sqrt(col.rr) <= 1e-300) col.frozen = true;
    }
    for (Eigen::Index c = 0; c < m; ++c) {
      x.col(c) = cols[static_cast<std::size_t>(c)].x;
    }
    r_data = prob.b - prob.j.matvec(x);
    rep.flops += 2ull * n * n * m + n * m;
    rec.record(x, r_data);
    check_stagnation(rep, prob.range_tol, k);
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  rep.x = std::move(x);
  rep.iterations = k;
  rep.converged = converged;
  rep.status = converged ? SolveStatus::converged : SolveStatus::max_iterations;
  return rep;
}

SolveReport solve_cg_normal(const SingularProblem& prob, const StoppingRule& stop,
                            const SolverOptions& opts) {
  return solve_cg_normal(prob, Eigen::MatrixXd::Zero(prob.size(), prob.rhs_count()),
                         stop, opts);
}

}  // namespace crb
