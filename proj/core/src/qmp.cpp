#include "crbkit/qmp.hpp"

#include "crbkit/errors.hpp"
#include "crbkit/spectral.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace crb {

namespace {

constexpr double kMonotonicitySlack = 1e-8;

// Per-iterate trajectory bookkeeping shared by all solvers.
struct Recorder {
  SolveReport* rep;
  const Eigen::MatrixXd* b;
  double b_norm;
  bool record_iterates;

  double objective = 0.0;
  double prev_objective = 0.0;
  double bound = 0.0;
  double residual = 0.0;

  // F(x0) for the starting iterate, evaluated once through the residual
  // identity F = -1/2 (tr(B^T X) + tr(R^T X)); later iterates accumulate the
  // per-step delta F(X+S) - F(X) = -1/2 tr(S^T (R_before + R_after)), which
  // has no cancellation against the absolute objective, so recorded
  // monotonicity is meaningful down to machine precision.
  void record_start(const Eigen::MatrixXd& x, const Eigen::MatrixXd& r) {
    const double rx = (r.array() * x.array()).sum();
    const double bx = (b->array() * x.array()).sum();
    record(x, r, -0.5 * (bx + rx));
  }

  void record(const Eigen::MatrixXd& x, const Eigen::MatrixXd& r,
              double objective_value) {
    prev_objective = objective;
    objective = objective_value;
    bound = (b->array() * x.array()).sum();
    const double rnorm = r.norm();
    residual = b_norm > 0.0 ? rnorm / b_norm : rnorm;
    rep->objective_trajectory.push_back(objective);
    rep->bound_trajectory.push_back(bound);
    rep->residual_trajectory.push_back(residual);
    if (record_iterates) rep->iterate_history.push_back(x);
    rep->flops += 6ull * static_cast<std::uint64_t>(x.size());
  }

  IterationState state(long k) const {
    IterationState s;
    s.iteration = k;
    s.objective_delta = k >= 1 ? std::abs(objective - prev_objective) : -1.0;
    s.relative_residual = residual;
    s.bound = bound;
    return s;
  }

  bool increased() const {
    return objective >
           prev_objective + kMonotonicitySlack * std::max(1.0, std::abs(prev_objective));
  }
};

void check_shapes(const QmpProblem& prob, const Eigen::MatrixXd& x0) {
  if (x0.rows() != prob.size() || x0.cols() != prob.rhs_count()) {
    throw DimensionMismatch("x0 shape does not match the problem");
  }
}

// Lazy positive-definiteness check via extremal-eigenvalue estimates.
SpectralSummary ensure_positive_definite(const SymMatrix& j, std::uint64_t seed) {
  PowerOptions opts;
  opts.seed = seed;
  const SpectralSummary s = power_extremes(j, opts);
  if (s.lambda_min <= 1e-12 * std::max(s.lambda_max, 0.0)) {
    throw NotPositiveDefinite("matrix is numerically singular or indefinite");
  }
  return s;
}

void finish(SolveReport& rep, long iterations, bool converged, SolveStatus status) {
  rep.iterations = iterations;
  rep.converged = converged;
  rep.status = converged ? SolveStatus::converged : status;
}

}  // namespace

QmpProblem::QmpProblem(SymMatrix j_in, Eigen::MatrixXd b_in)
    : j(std::move(j_in)), b(std::move(b_in)) {
  if (b.rows() != j.size() || b.cols() < 1) {
    throw DimensionMismatch("B must be n x m with m >= 1");
  }
}

namespace detail {

void gauss_seidel_sweep(const SymMatrix& j, const Eigen::MatrixXd& b,
                        Eigen::MatrixXd& x) {
  const Eigen::MatrixXd& a = j.dense();
  const Eigen::Index n = j.size();
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    auto col = x.col(c);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double row_dot = a.row(i).dot(col);
      col(i) += (b(i, c) - row_dot) / a(i, i);
    }
  }
}

}  // namespace detail

double objective(const QmpProblem& prob, const Eigen::MatrixXd& x) {
  if (x.rows() != prob.size() || x.cols() != prob.rhs_count()) {
    throw DimensionMismatch("objective: X shape does not match the problem");
  }
  const Eigen::MatrixXd jx = prob.j.matvec(x);
  return 0.5 * (x.array() * jx.array()).sum() - (prob.b.array() * x.array()).sum();
}

SolveReport solve_mm(const QmpProblem& prob, const Preconditioner& p,
                     const Eigen::MatrixXd& x0, const StoppingRule& stop,
                     const SolverOptions& opts) {
  check_shapes(prob, x0);
  if (p.size() != prob.size()) {
    throw DimensionMismatch("preconditioner size does not match the problem");
  }
  const Eigen::Index n = prob.size();
  const std::uint64_t m = static_cast<std::uint64_t>(prob.rhs_count());

  SolveReport rep;
  if (opts.compute_rho) {
    ensure_positive_definite(prob.j, opts.seed);
    PowerOptions popts;
    popts.seed = opts.seed;
    rep.rho_predicted = iteration_matrix_radius(p, prob.j, popts);
  }
  if (opts.validate_majorizer) {
    PowerOptions popts;
    popts.seed = opts.seed;
    const double lambda1 = power_extremes(prob.j, popts).lambda_max;
    if (majorization_margin(p, prob.j, opts.seed) < -1e-10 * lambda1) {
      throw MonotonicityViolation("preconditioner does not majorize J (P - J has a negative eigenvalue)");
    }
  }

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd jx(n, prob.rhs_count());
  Eigen::MatrixXd r(n, prob.rhs_count());
  Eigen::MatrixXd r_prev(n, prob.rhs_count());
  Eigen::MatrixXd step(n, prob.rhs_count());

  Recorder rec{&rep, &prob.b, prob.b.norm(), opts.record_iterates};
  prob.j.matvec_into(x, jx);
  r = prob.b - jx;
  rep.flops += 2ull * n * n * m + n * m;
  rec.record_start(x, r);

  if (stop.max_iters() == 0) {
    rep.x = std::move(x);
    finish(rep, 0, false, SolveStatus::max_iterations);
    return rep;
  }
  if (r.norm() == 0.0 || stop.satisfied(rec.state(0))) {
    rep.x = std::move(x);
    finish(rep, 0, true, SolveStatus::converged);
    return rep;
  }

  const std::uint64_t per_iter = 2ull * n * n * m + 4ull * n * m +
                                 m * p.apply_inverse_flops_per_column();
  long k = 0;
  bool converged = false;
  while (k < stop.max_iters()) {
    ++k;
    p.apply_inverse_into(r, step);
    x += step;
    r_prev.swap(r);
    prob.j.matvec_into(x, jx);
    r = prob.b - jx;
    const double delta =
        -0.5 * (step.array() * (r_prev.array() + r.array())).sum();
    rep.flops += per_iter;
    rec.record(x, r, rec.objective + delta);
    if (rec.increased()) {
      throw MonotonicityViolation(
          "MM objective increased: majorization precondition (P >= J) is violated");
    }
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  rep.x = std::move(x);
  finish(rep, k, converged, SolveStatus::max_iterations);
  return rep;
}

SolveReport solve_mm(const QmpProblem& prob, const Preconditioner& p,
                     const StoppingRule& stop, const SolverOptions& opts) {
  return solve_mm(prob, p, Eigen::MatrixXd::Zero(prob.size(), prob.rhs_count()),
                  stop, opts);
}

DirectionRule DirectionRule::steepest() {
  DirectionRule r;
  r.kind = Kind::steepest;
  return r;
}

DirectionRule DirectionRule::richardson(double omega) {
  DirectionRule r;
  r.kind = Kind::richardson;
  r.omega = omega;
  return r;
}

DirectionRule DirectionRule::gauss_seidel() {
  DirectionRule r;
  r.kind = Kind::gauss_seidel;
  return r;
}

DirectionRule DirectionRule::cg() {
  DirectionRule r;
  r.kind = Kind::cg;
  return r;
}

DirectionRule DirectionRule::pcg(Preconditioner p) {
  DirectionRule r;
  r.kind = Kind::pcg;
  r.precond = std::move(p);
  return r;
}

const char* DirectionRule::name() const {
  switch (kind) {
    case Kind::steepest: return "steepest";
    case Kind::richardson: return "richardson";
    case Kind::gauss_seidel: return "gauss-seidel";
    case Kind::cg: return "cg";
    case Kind::pcg: return "pcg";
  }
  return "unknown";
}

namespace {

double kappa_to_cg_rho(double kappa) {
  if (kappa > 0.999999) kappa = std::max(kappa, 1.0);  // estimator jitter near 1
  if (!(kappa >= 1.0)) return std::numeric_limits<double>::quiet_NaN();
  const double s = std::sqrt(kappa);
  return (s - 1.0) / (s + 1.0);
}

// Steepest descent / CG / PCG: per-column exact line searches advanced in
// lockstep so the composite trajectory is well defined for matrix B.
SolveReport solve_krylov(const QmpProblem& prob, const DirectionRule& rule,
                         const Eigen::MatrixXd& x0, const StoppingRule& stop,
                         const SolverOptions& opts, double rho_predicted) {
  const Eigen::Index n = prob.size();
  const Eigen::Index m = prob.rhs_count();
  const bool use_precond = rule.kind == DirectionRule::Kind::pcg;
  const bool conjugate = rule.kind != DirectionRule::Kind::steepest;
  const Preconditioner* precond = use_precond ? &*rule.precond : nullptr;

  SolveReport rep;
  rep.rho_predicted = rho_predicted;

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd r = prob.b - prob.j.matvec(x);
  rep.flops += 2ull * n * n * m + n * m;

  Recorder rec{&rep, &prob.b, prob.b.norm(), opts.record_iterates};
  rec.record_start(x, r);

  if (stop.max_iters() == 0) {
    rep.x = std::move(x);
    finish(rep, 0, false, SolveStatus::max_iterations);
    return rep;
  }
  if (r.norm() == 0.0 || stop.satisfied(rec.state(0))) {
    rep.x = std::move(x);
    finish(rep, 0, true, SolveStatus::converged);
    return rep;
  }

  struct Column {
    Eigen::VectorXd x, r, d;
    double rz = 0.0;
    bool frozen = false;
  };
  std::vector<Column> cols(static_cast<std::size_t>(m));
  std::vector<double> freeze_floor(static_cast<std::size_t>(m));
  for (Eigen::Index c = 0; c < m; ++c) {
    Column& col = cols[static_cast<std::size_t>(c)];
    col.x = x.col(c);
    col.r = r.col(c);
    Eigen::VectorXd z = use_precond ? precond->apply_inverse(col.r) : col.r;
    col.d = z;
    col.rz = col.r.dot(z);
    freeze_floor[static_cast<std::size_t>(c)] =
        std::max(1e-300, 1e-16 * prob.b.col(c).norm());
    col.frozen = col.r.norm() <= freeze_floor[static_cast<std::size_t>(c)];
  }

  long k = 0;
  long increases = 0;
  bool converged = false;
  SolveStatus fail_status = SolveStatus::max_iterations;
  Eigen::VectorXd q(n), z(n), r_before(n);
  while (k < stop.max_iters()) {
    ++k;
    double delta = 0.0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      Column& col = cols[c];
      if (col.frozen) continue;
      q = prob.j.matvec(col.d);
      const double dq = col.d.dot(q);
      if (dq <= 0.0) {
        if (col.r.norm() <= 1e-14 * rec.b_norm) {
          col.frozen = true;
          continue;
        }
        throw InternalError("zero or non-descent search direction with nonzero residual");
      }
      const double omega = col.rz / dq;
      col.x += omega * col.d;
      r_before = col.r;
      col.r -= omega * q;
      delta += -0.5 * omega * col.d.dot(r_before + col.r);
      rep.flops += 2ull * n * n + 14ull * n;
      if (conjugate) {
        z = use_precond ? precond->apply_inverse(col.r) : col.r;
        const double rz_new = col.r.dot(z);
        const double beta = col.rz > 0.0 ? rz_new / col.rz : 0.0;
        col.d = z + beta * col.d;
        col.rz = rz_new;
        rep.flops += 4ull * n +
                     (use_precond ? precond->apply_inverse_flops_per_column() : 0);
      } else {
        col.d = col.r;
        col.rz = col.r.squaredNorm();
        rep.flops += 2ull * n;
      }
      if (col.r.norm() <= freeze_floor[c]) col.frozen = true;
    }
    for (Eigen::Index c = 0; c < m; ++c) {
      x.col(c) = cols[static_cast<std::size_t>(c)].x;
      r.col(c) = cols[static_cast<std::size_t>(c)].r;
    }
    rec.record(x, r, rec.objective + delta);
    increases = rec.increased() ? increases + 1 : 0;
    if (increases >= opts.divergence_window) {
      fail_status = SolveStatus::diverged;
      break;
    }
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  rep.x = std::move(x);
  finish(rep, k, converged, fail_status);
  return rep;
}

SolveReport solve_richardson(const QmpProblem& prob, double omega,
                             const Eigen::MatrixXd& x0, const StoppingRule& stop,
                             const SolverOptions& opts, double rho_predicted) {
  const Eigen::Index n = prob.size();
  const std::uint64_t m = static_cast<std::uint64_t>(prob.rhs_count());

  SolveReport rep;
  rep.rho_predicted = rho_predicted;

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd jx(n, prob.rhs_count());
  Eigen::MatrixXd r(n, prob.rhs_count());
  prob.j.matvec_into(x, jx);
  r = prob.b - jx;
  rep.flops += 2ull * n * n * m + n * m;

  Recorder rec{&rep, &prob.b, prob.b.norm(), opts.record_iterates};
  rec.record_start(x, r);

  if (stop.max_iters() == 0) {
    rep.x = std::move(x);
    finish(rep, 0, false, SolveStatus::max_iterations);
    return rep;
  }
  if (r.norm() == 0.0 || stop.satisfied(rec.state(0))) {
    rep.x = std::move(x);
    finish(rep, 0, true, SolveStatus::converged);
    return rep;
  }

  Eigen::MatrixXd r_prev(n, prob.rhs_count());
  long k = 0;
  long increases = 0;
  bool converged = false;
  while (k < stop.max_iters()) {
    ++k;
    x += omega * r;
    r_prev.swap(r);
    prob.j.matvec_into(x, jx);
    r = prob.b - jx;
    const double delta =
        -0.5 * omega * (r_prev.array() * (r_prev.array() + r.array())).sum();
    rep.flops += 2ull * n * n * m + 5ull * n * m;
    rec.record(x, r, rec.objective + delta);
    increases = rec.increased() ? increases + 1 : 0;
    if (increases >= opts.divergence_window) {
      throw DivergenceError("Richardson iteration diverged: omega exceeds the stability bound");
    }
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  rep.x = std::move(x);
  finish(rep, k, converged, SolveStatus::max_iterations);
  return rep;
}

SolveReport solve_gauss_seidel(const QmpProblem& prob, const Eigen::MatrixXd& x0,
                               const StoppingRule& stop, const SolverOptions& opts,
                               double rho_predicted) {
  const Eigen::Index n = prob.size();
  const std::uint64_t m = static_cast<std::uint64_t>(prob.rhs_count());
  if ((prob.j.diagonal().array() <= 0.0).any()) {
    throw NotPositiveDefinite("Gauss-Seidel requires a strictly positive diagonal");
  }

  SolveReport rep;
  rep.rho_predicted = rho_predicted;

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd jx(n, prob.rhs_count());
  Eigen::MatrixXd r(n, prob.rhs_count());
  prob.j.matvec_into(x, jx);
  r = prob.b - jx;
  rep.flops += 2ull * n * n * m + n * m;

  Recorder rec{&rep, &prob.b, prob.b.norm(), opts.record_iterates};
  rec.record_start(x, r);

  if (stop.max_iters() == 0) {
    rep.x = std::move(x);
    finish(rep, 0, false, SolveStatus::max_iterations);
    return rep;
  }
  if (r.norm() == 0.0 || stop.satisfied(rec.state(0))) {
    rep.x = std::move(x);
    finish(rep, 0, true, SolveStatus::converged);
    return rep;
  }

  Eigen::MatrixXd x_prev(n, prob.rhs_count());
  Eigen::MatrixXd r_prev(n, prob.rhs_count());
  long k = 0;
  bool converged = false;
  while (k < stop.max_iters()) {
    ++k;
    x_prev = x;
    r_prev.swap(r);
    detail::gauss_seidel_sweep(prob.j, prob.b, x);
    prob.j.matvec_into(x, jx);
    r = prob.b - jx;
    const double delta = -0.5 * ((x.array() - x_prev.array()) *
                                 (r_prev.array() + r.array()))
                                    .sum();
    rep.flops += 4ull * n * n * m + 5ull * n * m;
    rec.record(x, r, rec.objective + delta);
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  rep.x = std::move(x);
  finish(rep, k, converged, SolveStatus::max_iterations);
  return rep;
}

}  // namespace

SolveReport solve_gd(const QmpProblem& prob, const DirectionRule& rule,
                     const Eigen::MatrixXd& x0, const StoppingRule& stop,
                     const SolverOptions& opts) {
  check_shapes(prob, x0);
  using Kind = DirectionRule::Kind;

  double rho = std::numeric_limits<double>::quiet_NaN();
  SpectralSummary extremes;
  const bool need_extremes =
      opts.compute_rho || (rule.kind == Kind::richardson && rule.omega <= 0.0);
  if (need_extremes) {
    extremes = ensure_positive_definite(prob.j, opts.seed);
  }

  switch (rule.kind) {
    case Kind::steepest: {
      if (opts.compute_rho) {
        const double kappa = extremes.condition_estimate;
        rho = (kappa - 1.0) / (kappa + 1.0);
      }
      return solve_krylov(prob, rule, x0, stop, opts, rho);
    }
    case Kind::cg: {
      if (opts.compute_rho) rho = kappa_to_cg_rho(extremes.condition_estimate);
      return solve_krylov(prob, rule, x0, stop, opts, rho);
    }
    case Kind::pcg: {
      if (!rule.precond || rule.precond->size() != prob.size()) {
        throw DimensionMismatch("pcg requires a preconditioner matching the problem size");
      }
      if (opts.compute_rho) {
        const Preconditioner& p = *rule.precond;
        Eigen::VectorXd jx(prob.size());
        const LinearOperator apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
          jx = prob.j.matvec(v);
          y = p.apply_inverse(jx);
        };
        PowerOptions popts;
        popts.seed = opts.seed;
        const SpectralSummary s = operator_extremes(apply, prob.size(), popts);
        rho = kappa_to_cg_rho(s.condition_estimate);
      }
      return solve_krylov(prob, rule, x0, stop, opts, rho);
    }
    case Kind::richardson: {
      double omega = rule.omega;
      if (omega <= 0.0) {
        // Classical stability requires omega < 2 / lambda_1; use the optimal
        // 2 / (lambda_1 + lambda_n) when the estimates converged, otherwise a
        // Gershgorin-safe fallback.
        if (extremes.converged && extremes.lambda_max > 0.0) {
          omega = 2.0 / (extremes.lambda_max + std::max(extremes.lambda_min, 0.0));
        } else {
          double bound = 0.0;
          for (Eigen::Index i = 0; i < prob.size(); ++i) {
            bound = std::max(bound, prob.j.dense().row(i).cwiseAbs().sum());
          }
          omega = 1.0 / bound;
        }
      }
      if (opts.compute_rho) {
        rho = std::max(std::abs(1.0 - omega * extremes.lambda_max),
                       std::abs(1.0 - omega * extremes.lambda_min));
      }
      return solve_richardson(prob, omega, x0, stop, opts, rho);
    }
    case Kind::gauss_seidel: {
      if (opts.compute_rho) {
        // Power iteration on the homogeneous sweep map (B = 0).
        Eigen::MatrixXd xs(prob.size(), 1);
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(prob.size(), 1);
        const LinearOperator apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
          xs.col(0) = v;
          detail::gauss_seidel_sweep(prob.j, zero, xs);
          y = xs.col(0);
        };
        PowerOptions popts;
        popts.seed = opts.seed;
        rho = operator_spectral_radius(apply, prob.size(), popts).value;
      }
      return solve_gauss_seidel(prob, x0, stop, opts, rho);
    }
  }
  throw InternalError("unreachable direction rule");
}

SolveReport solve_gd(const QmpProblem& prob, const DirectionRule& rule,
                     const StoppingRule& stop, const SolverOptions& opts) {
  return solve_gd(prob, rule, Eigen::MatrixXd::Zero(prob.size(), prob.rhs_count()),
                  stop, opts);
}

}  // namespace crb
