#include "crbkit/constrained.hpp"

#include "crbkit/errors.hpp"
#include "crbkit/qmp.hpp"
#include "crbkit/spectral.hpp"

#include <cmath>
#include <cstdio>
#include <utility>
#include <vector>

namespace crb {

namespace {

constexpr double kRankThreshold = 1e-10;
constexpr double kFeasibilityTol = 1e-10;

// Orthogonal projector onto null(H^T): v -> v - H (H^T H)^{-1} H^T v.
// Used for residual reporting and for projecting infeasible starts.
class OrthogonalProjector {
 public:
  explicit OrthogonalProjector(const Eigen::MatrixXd& h) : h_(&h) {
    if (h.cols() > 0) {
      llt_.compute(h.transpose() * h);
      if (llt_.info() != Eigen::Success) {
        throw RankDeficientConstraints("H^T H is singular: constraints are rank deficient");
      }
    }
  }

  Eigen::MatrixXd project(const Eigen::MatrixXd& v) const {
    if (h_->cols() == 0) return v;
    return v - *h_ * llt_.solve(h_->transpose() * v);
  }

 private:
  const Eigen::MatrixXd* h_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

// Oblique projector T = I - P^{-1} H (H^T P^{-1} H)^{-1} H^T. Maps anything
// into null(H^T) along range(P^{-1} H); idempotent.
class ObliqueProjector {
 public:
  ObliqueProjector(const Preconditioner& p, const Eigen::MatrixXd& h) : h_(&h) {
    if (h.cols() > 0) {
      pinv_h_ = p.apply_inverse(h);
      llt_.compute(h.transpose() * pinv_h_);
      if (llt_.info() != Eigen::Success) {
        throw RankDeficientConstraints(
            "H^T P^{-1} H is singular: constraints are rank deficient");
      }
    }
  }

  void apply_in_place(Eigen::MatrixXd& v) const {
    if (h_->cols() == 0) return;
    v -= pinv_h_ * llt_.solve(h_->transpose() * v);
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    if (h_->cols() == 0) return v;
    return v - pinv_h_ * llt_.solve(h_->transpose() * v);
  }

  std::uint64_t flops_per_column(Eigen::Index n) const {
    const std::uint64_t p = static_cast<std::uint64_t>(h_->cols());
    return 4ull * n * p + 2ull * p * p + n;
  }

 private:
  const Eigen::MatrixXd* h_;
  Eigen::MatrixXd pinv_h_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct ConstrainedRecorder {
  SolveReport* rep;
  double scale;  // ||projected B||_F (or ||reduced b||)
  bool record_iterates;

  double objective = 0.0;
  double prev_objective = 0.0;
  double bound = 0.0;
  double residual = 0.0;

  void push(double objective_value, double bound_value, double residual_norm,
            const Eigen::MatrixXd& x) {
    prev_objective = objective;
    objective = objective_value;
    bound = bound_value;
    residual = scale > 0.0 ? residual_norm / scale : residual_norm;
    rep->objective_trajectory.push_back(objective);
    rep->bound_trajectory.push_back(bound);
    rep->residual_trajectory.push_back(residual);
    if (record_iterates) rep->iterate_history.push_back(x);
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
           prev_objective + 1e-8 * std::max(1.0, std::abs(prev_objective));
  }
};

// Validates H^T x0 = 0; projects (with a warning) or throws depending on
// SolverOptions::strict_feasibility.
Eigen::MatrixXd feasible_start(const ConstrainedQmpProblem& prob,
                               const Eigen::MatrixXd& x0,
                               const OrthogonalProjector& orth,
                               const SolverOptions& opts) {
  if (x0.rows() != prob.size() || x0.cols() != prob.rhs_count()) {
    throw DimensionMismatch("x0 shape does not match the problem");
  }
  const Eigen::MatrixXd& h = prob.constraints.h;
  if (h.cols() == 0 || x0.norm() == 0.0) return x0;
  const double violation = (h.transpose() * x0).norm();
  const double tol = kFeasibilityTol * h.norm() * std::max(1.0, x0.norm());
  if (violation <= tol) return x0;
  if (opts.strict_feasibility) {
    throw InfeasibleStart("x0 violates the equality constraints H^T x = 0");
  }
  std::fprintf(stderr,
               "crbkit: warning: infeasible x0 (||H^T x0|| = %.3e) projected "
               "onto the constraint nullspace\n",
               violation);
  return orth.project(x0);
}

void finish(SolveReport& rep, Eigen::MatrixXd x, long iterations, bool converged,
            SolveStatus fail_status) {
  rep.x = std::move(x);
  rep.iterations = iterations;
  rep.converged = converged;
  rep.status = converged ? SolveStatus::converged : fail_status;
}

// Reduced-space diagnostics shared by the constrained solvers: positive
// definiteness of U^T J U and the requested convergence-factor estimate.
struct ReducedOperators {
  const ConstrainedQmpProblem* prob;
  const Preconditioner* precond;
  Eigen::MatrixXd u;
  ObliqueProjector oblique;

  ReducedOperators(const ConstrainedQmpProblem& pr, const Preconditioner& pc)
      : prob(&pr), precond(&pc), u(null_basis(pr.constraints.h).u),
        oblique(pc, pr.constraints.h) {}

  Eigen::Index reduced_dim() const { return u.cols(); }

  // y -> U^T J U y
  Eigen::VectorXd apply_reduced_fisher(const Eigen::VectorXd& y) const {
    return u.transpose() * prob->j.matvec(Eigen::VectorXd(u * y));
  }

  // y -> (U^T P U)^{-1} y through the saddle-point identity
  // (U^T P U)^{-1} = U^T T P^{-1} U.
  Eigen::VectorXd apply_reduced_precond_inverse(const Eigen::VectorXd& y) const {
    return u.transpose() * oblique.apply(precond->apply_inverse(Eigen::VectorXd(u * y)));
  }

  void ensure_reduced_pd(std::uint64_t seed) const {
    if (reduced_dim() == 0) return;
    PowerOptions popts;
    popts.seed = seed;
    const LinearOperator apply = [this](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
      y = apply_reduced_fisher(v);
    };
    const SpectralSummary s = operator_extremes(apply, reduced_dim(), popts);
    if (s.lambda_min <= 1e-12 * std::max(s.lambda_max, 0.0)) {
      throw SingularReducedFisher("U^T J U is numerically singular");
    }
  }

  double mm_radius(std::uint64_t seed) const {
    if (reduced_dim() == 0) return 0.0;
    PowerOptions popts;
    popts.seed = seed;
    const LinearOperator apply = [this](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
      y = v - apply_reduced_precond_inverse(apply_reduced_fisher(v));
    };
    return operator_spectral_radius(apply, reduced_dim(), popts).value;
  }

  double preconditioned_condition(std::uint64_t seed) const {
    if (reduced_dim() == 0) return 1.0;
    PowerOptions popts;
    popts.seed = seed;
    const LinearOperator apply = [this](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
      y = apply_reduced_precond_inverse(apply_reduced_fisher(v));
    };
    return operator_extremes(apply, reduced_dim(), popts).condition_estimate;
  }
};

double cg_rho_from_kappa(double kappa) {
  if (kappa > 0.999999) kappa = std::max(kappa, 1.0);  // estimator jitter near 1
  if (!(kappa >= 1.0)) return std::numeric_limits<double>::quiet_NaN();
  const double s = std::sqrt(kappa);
  return (s - 1.0) / (s + 1.0);
}

}  // namespace

ConstraintSet::ConstraintSet(Eigen::MatrixXd h_in) : h(std::move(h_in)) {
  if (h.rows() < 1) {
    throw DimensionMismatch("constraint gradient must have n >= 1 rows");
  }
  if (h.cols() == 0) return;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h);
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < h.cols()) {
    throw RankDeficientConstraints("constraint gradient H does not have full column rank");
  }
}

ConstraintSet ConstraintSet::sum_to_zero(Eigen::Index n) {
  return ConstraintSet(Eigen::MatrixXd::Ones(n, 1));
}

ConstraintSet ConstraintSet::none(Eigen::Index n) {
  if (n < 1) throw DimensionMismatch("constraint dimension must be >= 1");
  return ConstraintSet(Eigen::MatrixXd(n, 0));
}

NullBasis null_basis(const Eigen::MatrixXd& h) {
  const Eigen::Index n = h.rows();
  const Eigen::Index p = h.cols();
  if (n < 1) throw DimensionMismatch("constraint gradient must have n >= 1 rows");
  if (p == 0) {
    return NullBasis{Eigen::MatrixXd::Identity(n, n)};
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h);
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < p) {
    throw RankDeficientConstraints("constraint gradient H does not have full column rank");
  }
  const Eigen::MatrixXd q = qr.householderQ();
  return NullBasis{q.rightCols(n - p)};
}

ConstrainedQmpProblem::ConstrainedQmpProblem(SymMatrix j_in, Eigen::MatrixXd b_in,
                                             ConstraintSet c_in)
    : j(std::move(j_in)), b(std::move(b_in)), constraints(std::move(c_in)) {
  if (b.rows() != j.size() || b.cols() < 1) {
    throw DimensionMismatch("B must be n x m with m >= 1");
  }
  if (constraints.dim() != j.size()) {
    throw DimensionMismatch("constraint gradient rows must match the problem size");
  }
}

Eigen::MatrixXd constrained_crb_oracle(const ConstrainedQmpProblem& prob) {
  const Eigen::Index n = prob.size();
  const Eigen::Index m = prob.rhs_count();
  const Eigen::MatrixXd u = null_basis(prob.constraints.h).u;
  const Eigen::Index r = u.cols();
  if (r == 0) {
    return Eigen::MatrixXd::Zero(n, m);
  }
  const Eigen::MatrixXd ju = prob.j.matvec(u);
  const Eigen::MatrixXd reduced = u.transpose() * ju;
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (reduced + reduced.transpose()));
  if (llt.info() != Eigen::Success) {
    throw SingularReducedFisher("U^T J U is not positive definite");
  }
  prob.j.add_flops(2ull * n * r * r + static_cast<std::uint64_t>(r) * r * r / 3 +
                   4ull * n * r * m + 2ull * r * r * m);
  return u * llt.solve(u.transpose() * prob.b);
}

Eigen::MatrixXd constrained_crb_inverse_formula(const ConstrainedQmpProblem& prob) {
  const Eigen::MatrixXd& h = prob.constraints.h;
  const Eigen::MatrixXd jinv_b = prob.j.direct_solve(prob.b);
  if (h.cols() == 0) return jinv_b;
  const Eigen::MatrixXd jinv_h = prob.j.direct_solve(h);
  const SymMatrix gram(h.transpose() * jinv_h);  // H^T J^{-1} H
  const Eigen::MatrixXd correction =
      jinv_h * gram.pseudoinverse_apply(h.transpose() * jinv_b);
  return jinv_b - correction;
}

Eigen::MatrixXd oblique_constraint_projector(const Preconditioner& p,
                                             const Eigen::MatrixXd& h) {
  if (h.rows() != p.size()) {
    throw DimensionMismatch("projector: H rows must match preconditioner size");
  }
  const Eigen::Index n = p.size();
  if (h.cols() == 0) return Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd pinv_h = p.apply_inverse(h);
  Eigen::LLT<Eigen::MatrixXd> llt(h.transpose() * pinv_h);
  if (llt.info() != Eigen::Success) {
    throw RankDeficientConstraints("H^T P^{-1} H is singular");
  }
  return Eigen::MatrixXd::Identity(n, n) - pinv_h * llt.solve(h.transpose());
}

SolveReport solve_constrained_mm(const ConstrainedQmpProblem& prob,
                                 const Preconditioner& p, const Eigen::MatrixXd& x0,
                                 const StoppingRule& stop,
                                 const SolverOptions& opts) {
  if (p.size() != prob.size()) {
    throw DimensionMismatch("preconditioner size does not match the problem");
  }
  const Eigen::Index n = prob.size();
  const std::uint64_t m = static_cast<std::uint64_t>(prob.rhs_count());
  const Eigen::MatrixXd& h = prob.constraints.h;

  const OrthogonalProjector orth(h);
  const ObliqueProjector oblique(p, h);

  SolveReport rep;
  if (opts.compute_rho) {
    const ReducedOperators reduced(prob, p);
    reduced.ensure_reduced_pd(opts.seed);
    rep.rho_predicted = reduced.mm_radius(opts.seed);
  }
  if (opts.validate_majorizer) {
    PowerOptions popts;
    popts.seed = opts.seed;
    const double lambda1 = power_extremes(prob.j, popts).lambda_max;
    if (majorization_margin(p, prob.j, opts.seed) < -1e-10 * std::max(lambda1, 1.0)) {
      throw MonotonicityViolation("preconditioner does not majorize J");
    }
  }

  Eigen::MatrixXd x = feasible_start(prob, x0, orth, opts);
  Eigen::MatrixXd jx(n, prob.rhs_count());
  Eigen::MatrixXd r(n, prob.rhs_count());
  Eigen::MatrixXd x_prev(n, prob.rhs_count());
  Eigen::MatrixXd r_prev(n, prob.rhs_count());
  Eigen::MatrixXd step(n, prob.rhs_count());

  prob.j.matvec_into(x, jx);
  r = prob.b - jx;
  rep.flops += 2ull * n * n * m + n * m;

  ConstrainedRecorder rec{&rep, orth.project(prob.b).norm(), opts.record_iterates};
  // objective accumulated from the per-step identity
  // F(X+S) - F(X) = -1/2 tr(S^T (R_before + R_after)); see qmp.cpp.
  double objective = -0.5 * ((prob.b.array() * x.array()).sum() +
                             (r.array() * x.array()).sum());
  auto record = [&]() {
    const double bound = (prob.b.array() * x.array()).sum();
    const double proj_res = orth.project(r).norm();
    rec.push(objective, bound, proj_res, x);
    rep.flops += 4ull * n * m + m * oblique.flops_per_column(n);
  };
  record();

  if (stop.max_iters() == 0) {
    finish(rep, std::move(x), 0, false, SolveStatus::max_iterations);
    return rep;
  }
  if (orth.project(r).norm() == 0.0 || stop.satisfied(rec.state(0))) {
    finish(rep, std::move(x), 0, true, SolveStatus::converged);
    return rep;
  }

  const std::uint64_t per_iter = 2ull * n * n * m + 4ull * n * m +
                                 m * p.apply_inverse_flops_per_column() +
                                 m * oblique.flops_per_column(n);
  long k = 0;
  bool converged = false;
  while (k < stop.max_iters()) {
    ++k;
    x_prev = x;
    r_prev.swap(r);
    p.apply_inverse_into(r_prev, step);
    x += step;
    oblique.apply_in_place(x);  // T (X + P^{-1} R)
    prob.j.matvec_into(x, jx);
    r = prob.b - jx;
    objective += -0.5 * ((x.array() - x_prev.array()) *
                         (r_prev.array() + r.array()))
                            .sum();
    rep.flops += per_iter;
    record();
    if (rec.increased()) {
      throw MonotonicityViolation(
          "constrained MM objective increased: majorization precondition is violated");
    }
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  finish(rep, std::move(x), k, converged, SolveStatus::max_iterations);
  return rep;
}

SolveReport solve_constrained_mm(const ConstrainedQmpProblem& prob,
                                 const Preconditioner& p, const StoppingRule& stop,
                                 const SolverOptions& opts) {
  return solve_constrained_mm(
      prob, p, Eigen::MatrixXd::Zero(prob.size(), prob.rhs_count()), stop, opts);
}

SolveReport solve_constrained_pcg(const ConstrainedQmpProblem& prob,
                                  const Preconditioner& p, const Eigen::MatrixXd& x0,
                                  const StoppingRule& stop,
                                  const SolverOptions& opts) {
  if (p.size() != prob.size()) {
    throw DimensionMismatch("preconditioner size does not match the problem");
  }
  const Eigen::Index n = prob.size();
  const Eigen::Index m = prob.rhs_count();
  const Eigen::MatrixXd& h = prob.constraints.h;
  const Eigen::Index pc = h.cols();

  const OrthogonalProjector orth(h);
  ReducedOperators reduced(prob, p);
  const Eigen::Index r_dim = reduced.reduced_dim();
  const Eigen::MatrixXd& u = reduced.u;

  SolveReport rep;
  if (opts.compute_rho) {
    reduced.ensure_reduced_pd(opts.seed);
    rep.rho_predicted = cg_rho_from_kappa(reduced.preconditioned_condition(opts.seed));
  }

  Eigen::MatrixXd x_start = feasible_start(prob, x0, orth, opts);

  if (r_dim == 0) {
    // Fully constrained: the only feasible point is 0.
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, m);
    ConstrainedRecorder rec{&rep, 0.0, opts.record_iterates};
    rec.push(0.0, 0.0, 0.0, x);
    finish(rep, std::move(x), 0, true, SolveStatus::converged);
    return rep;
  }

  const Eigen::MatrixXd b_red = u.transpose() * prob.b;
  Eigen::MatrixXd y = u.transpose() * x_start;

  struct Column {
    Eigen::VectorXd y, r, d;
    double rz = 0.0;
    bool frozen = false;
  };
  std::vector<Column> cols(static_cast<std::size_t>(m));

  const std::uint64_t fisher_apply =
      4ull * n * r_dim + 2ull * n * n;  // U up/down + J matvec
  const std::uint64_t precond_apply = 4ull * n * r_dim +
                                      p.apply_inverse_flops_per_column() +
                                      (pc > 0 ? 4ull * n * pc + 2ull * pc * pc : 0);

  for (Eigen::Index c = 0; c < m; ++c) {
    Column& col = cols[static_cast<std::size_t>(c)];
    col.y = y.col(c);
    col.r = b_red.col(c) - reduced.apply_reduced_fisher(col.y);
    Eigen::VectorXd z = reduced.apply_reduced_precond_inverse(col.r);
    col.d = z;
    col.rz = col.r.dot(z);
    col.frozen = col.r.norm() <= std::max(1e-300, 1e-16 * b_red.col(c).norm());
    rep.flops += fisher_apply + precond_apply;
  }

  ConstrainedRecorder rec{&rep, b_red.norm(), opts.record_iterates};
  Eigen::MatrixXd x_out;
  double objective = 0.0;
  {
    // F(X) = 1/2 tr(Y^T A~ Y) - tr(b~^T Y) in reduced coordinates; the start
    // is evaluated directly, later iterates accumulate per-step deltas.
    for (Eigen::Index c = 0; c < m; ++c) {
      const Column& col = cols[static_cast<std::size_t>(c)];
      objective += -0.5 * (b_red.col(c).dot(col.y) + col.r.dot(col.y));
    }
  }
  auto record = [&]() {
    double bound = 0.0, res_sq = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      const Column& col = cols[static_cast<std::size_t>(c)];
      bound += b_red.col(c).dot(col.y);
      res_sq += col.r.squaredNorm();
    }
    rep.flops += 4ull * r_dim * m;
    if (opts.record_iterates) {
      x_out.resize(n, m);
      for (Eigen::Index c = 0; c < m; ++c) {
        x_out.col(c) = u * cols[static_cast<std::size_t>(c)].y;
      }
    }
    rec.push(objective, bound, std::sqrt(res_sq), x_out);
  };
  record();

  bool converged = false;
  long k = 0;
  bool done = stop.max_iters() == 0;
  if (!done) {
    double r0 = 0.0;
    for (const Column& col : cols) r0 += col.r.squaredNorm();
    if (r0 == 0.0 || stop.satisfied(rec.state(0))) {
      converged = true;
      done = true;
    }
  }

  Eigen::VectorXd q(r_dim), z(r_dim), r_before(r_dim);
  while (!done && k < stop.max_iters()) {
    ++k;
    double delta = 0.0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      Column& col = cols[c];
      if (col.frozen) continue;
      q = reduced.apply_reduced_fisher(col.d);
      const double dq = col.d.dot(q);
      if (dq <= 0.0) {
        if (col.r.norm() <= 1e-14 * rec.scale) {
          col.frozen = true;
          continue;
        }
        throw InternalError("non-descent direction in constrained PCG");
      }
      const double omega = col.rz / dq;
      col.y += omega * col.d;
      r_before = col.r;
      col.r -= omega * q;
      delta += -0.5 * omega * col.d.dot(r_before + col.r);
      z = reduced.apply_reduced_precond_inverse(col.r);
      const double rz_new = col.r.dot(z);
      const double beta = col.rz > 0.0 ? rz_new / col.rz : 0.0;
      col.d = z + beta * col.d;
      col.rz = rz_new;
      rep.flops += fisher_apply + precond_apply + 10ull * r_dim;
      if (col.r.norm() <= 1e-300) col.frozen = true;
    }
    objective += delta;
    record();
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }

  Eigen::MatrixXd x(n, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    x.col(c) = u * cols[static_cast<std::size_t>(c)].y;
  }
  rep.flops += 2ull * n * r_dim * m;
  finish(rep, std::move(x), k, converged, SolveStatus::max_iterations);
  return rep;
}

SolveReport solve_constrained_pcg(const ConstrainedQmpProblem& prob,
                                  const Preconditioner& p, const StoppingRule& stop,
                                  const SolverOptions& opts) {
  return solve_constrained_pcg(
      prob, p, Eigen::MatrixXd::Zero(prob.size(), prob.rhs_count()), stop, opts);
}

SolveReport solve_constrained_pcg_projected(const ConstrainedQmpProblem& prob,
                                            const Preconditioner& p,
                                            const Eigen::MatrixXd& x0,
                                            const StoppingRule& stop,
                                            const SolverOptions& opts) {
  if (p.size() != prob.size()) {
    throw DimensionMismatch("preconditioner size does not match the problem");
  }
  const Eigen::Index n = prob.size();
  const Eigen::Index m = prob.rhs_count();
  const Eigen::MatrixXd& h = prob.constraints.h;

  const OrthogonalProjector orth(h);
  const ObliqueProjector oblique(p, h);

  SolveReport rep;
  if (opts.compute_rho) {
    const ReducedOperators reduced(prob, p);
    reduced.ensure_reduced_pd(opts.seed);
    rep.rho_predicted = cg_rho_from_kappa(reduced.preconditioned_condition(opts.seed));
  }

  Eigen::MatrixXd x = feasible_start(prob, x0, orth, opts);

  struct Column {
    Eigen::VectorXd x, r, g, d;  // g = orthogonally projected residual
    double rz = 0.0;
    bool frozen = false;
  };
  std::vector<Column> cols(static_cast<std::size_t>(m));
  {
    const Eigen::MatrixXd r0 = prob.b - prob.j.matvec(x);
    for (Eigen::Index c = 0; c < m; ++c) {
      Column& col = cols[static_cast<std::size_t>(c)];
      col.x = x.col(c);
      col.r = r0.col(c);
      col.g = orth.project(col.r);
      const Eigen::VectorXd z = oblique.apply(p.apply_inverse(Eigen::VectorXd(col.r)));
      col.d = z;
      // scalar recurrences use the projected residual: the Lagrange component
      // of r is orders of magnitude above the projected one near convergence
      // and would contaminate rz/beta
      col.rz = col.g.dot(z);
      col.frozen = col.g.norm() <= 1e-300;
    }
  }

  const double scale = orth.project(prob.b).norm();
  ConstrainedRecorder rec{&rep, scale, opts.record_iterates};
  Eigen::MatrixXd r_mat(n, m);
  double objective = 0.0;
  bool objective_started = false;
  auto record = [&]() {
    for (Eigen::Index c = 0; c < m; ++c) {
      x.col(c) = cols[static_cast<std::size_t>(c)].x;
      r_mat.col(c) = cols[static_cast<std::size_t>(c)].r;
    }
    const double bound = (prob.b.array() * x.array()).sum();
    if (!objective_started) {
      const double rx = (r_mat.array() * x.array()).sum();
      objective = -0.5 * (bound + rx);
      objective_started = true;
    }
    rec.push(objective, bound, orth.project(r_mat).norm(), x);
  };
  record();

  bool converged = false;
  long k = 0;
  bool done = stop.max_iters() == 0;
  if (!done && (orth.project(r_mat).norm() == 0.0 || stop.satisfied(rec.state(0)))) {
    converged = true;
    done = true;
  }

  // Feasibility drift along col(H) is not visible to the projected residual,
  // so directions are re-projected every step and the iterate is refreshed
  // (re-projected, residual recomputed, conjugacy restarted) periodically.
  constexpr long kRefreshPeriod = 50;
  Eigen::VectorXd q(n), z(n), r_before(n);
  while (!done && k < stop.max_iters()) {
    ++k;
    const bool refresh = (k % kRefreshPeriod) == 0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      Column& col = cols[c];
      if (col.frozen) continue;
      q = prob.j.matvec(col.d);
      const double dq = col.d.dot(q);
      if (dq <= 0.0) {
        if (col.g.norm() <= 1e-14 * std::max(scale, 1.0)) {
          col.frozen = true;
          continue;
        }
        throw InternalError("non-descent direction in projected PCG");
      }
      const double omega = col.rz / dq;
      col.x += omega * col.d;
      r_before = col.r;
      col.r -= omega * q;
      objective += -0.5 * omega * col.d.dot(r_before + col.r);
      if (refresh) {
        col.x = orth.project(col.x);
        col.r = prob.b.col(c) - prob.j.matvec(Eigen::VectorXd(col.x));
        col.g = orth.project(col.r);
        z = oblique.apply(p.apply_inverse(Eigen::VectorXd(col.r)));
        col.d = z;
        col.rz = col.g.dot(z);
        rep.flops += 2ull * n * n;
      } else {
        col.g = orth.project(col.r);
        z = oblique.apply(p.apply_inverse(Eigen::VectorXd(col.g)));
        const double rz_new = col.g.dot(z);
        const double beta = col.rz > 0.0 ? rz_new / col.rz : 0.0;
        col.d = orth.project(Eigen::VectorXd(z + beta * col.d));
        col.rz = rz_new;
      }
      rep.flops += 2ull * n * n + 10ull * n + p.apply_inverse_flops_per_column() +
                   3ull * oblique.flops_per_column(n);
      if (col.g.norm() <= 1e-300) col.frozen = true;
    }
    record();
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  finish(rep, std::move(x), k, converged, SolveStatus::max_iterations);
  return rep;
}

SolveReport solve_gradient_projection(const ConstrainedQmpProblem& prob,
                                      const Preconditioner& p,
                                      const Eigen::MatrixXd& x0,
                                      const StoppingRule& stop,
                                      const SolverOptions& opts) {
  if (p.size() != prob.size()) {
    throw DimensionMismatch("preconditioner size does not match the problem");
  }
  const Eigen::Index n = prob.size();
  const Eigen::Index m = prob.rhs_count();
  const Eigen::MatrixXd& h = prob.constraints.h;

  const OrthogonalProjector orth(h);
  // The descent direction is the P-metric steepest feasible direction
  // T P^{-1} r (the saddle-point solve); an orthogonal projection of P^{-1} r
  // would not vanish at the constrained optimum unless P = I.
  const ObliqueProjector oblique(p, h);

  SolveReport rep;
  if (opts.compute_rho) {
    const ReducedOperators reduced(prob, p);
    reduced.ensure_reduced_pd(opts.seed);
    double kappa = reduced.preconditioned_condition(opts.seed);
    if (kappa > 0.999999) kappa = std::max(kappa, 1.0);
    rep.rho_predicted = kappa >= 1.0 ? (kappa - 1.0) / (kappa + 1.0)
                                     : std::numeric_limits<double>::quiet_NaN();
  }

  Eigen::MatrixXd x = feasible_start(prob, x0, orth, opts);
  Eigen::MatrixXd r = prob.b - prob.j.matvec(x);
  rep.flops += 2ull * n * n * m + n * m;

  ConstrainedRecorder rec{&rep, orth.project(prob.b).norm(), opts.record_iterates};
  double objective = -0.5 * ((prob.b.array() * x.array()).sum() +
                             (r.array() * x.array()).sum());
  auto record = [&]() {
    const double bound = (prob.b.array() * x.array()).sum();
    rec.push(objective, bound, orth.project(r).norm(), x);
  };
  record();

  if (stop.max_iters() == 0) {
    finish(rep, std::move(x), 0, false, SolveStatus::max_iterations);
    return rep;
  }
  if (orth.project(r).norm() == 0.0 || stop.satisfied(rec.state(0))) {
    finish(rep, std::move(x), 0, true, SolveStatus::converged);
    return rep;
  }

  long k = 0;
  long increases = 0;
  long stalls = 0;
  bool converged = false;
  SolveStatus fail_status = SolveStatus::max_iterations;
  Eigen::MatrixXd d(n, m), q(n, m);
  while (k < stop.max_iters()) {
    ++k;
    d = p.apply_inverse(r);
    oblique.apply_in_place(d);
    prob.j.matvec_into(d, q);
    double max_step = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      const double dq = d.col(c).dot(q.col(c));
      if (dq <= 0.0) continue;  // direction vanished for this column
      const double omega = r.col(c).dot(d.col(c)) / dq;
      x.col(c) += omega * d.col(c);
      const Eigen::VectorXd r_before = r.col(c);
      r.col(c) -= omega * q.col(c);
      objective += -0.5 * omega * d.col(c).dot(r_before + r.col(c));
      max_step = std::max(max_step, std::abs(omega) * d.col(c).norm());
    }
    rep.flops += 2ull * n * n * m + 8ull * n * m +
                 m * p.apply_inverse_flops_per_column();
    record();
    increases = rec.increased() ? increases + 1 : 0;
    if (increases >= opts.divergence_window) {
      fail_status = SolveStatus::diverged;
      break;
    }
    stalls = (max_step <= 1e-16 * std::max(1.0, x.norm())) ? stalls + 1 : 0;
    if (stalls >= opts.divergence_window) {
      fail_status = SolveStatus::stalled;
      break;
    }
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  finish(rep, std::move(x), k, converged, fail_status);
  return rep;
}

SolveReport solve_gradient_projection(const ConstrainedQmpProblem& prob,
                                      const Preconditioner& p,
                                      const StoppingRule& stop,
                                      const SolverOptions& opts) {
  return solve_gradient_projection(
      prob, p, Eigen::MatrixXd::Zero(prob.size(), prob.rhs_count()), stop, opts);
}

SolveReport gs_two_solve_composition(const SymMatrix& j, const Eigen::VectorXd& b,
                                     const Eigen::VectorXd& h,
                                     const StoppingRule& stop,
                                     const SolverOptions& opts) {
  const Eigen::Index n = j.size();
  if (b.size() != n || h.size() != n) {
    throw DimensionMismatch("b and h must match the matrix size");
  }
  if (h.norm() == 0.0) {
    throw RankDeficientConstraints("constraint vector h must be nonzero");
  }
  if ((j.diagonal().array() <= 0.0).any()) {
    throw NotPositiveDefinite("Gauss-Seidel requires a strictly positive diagonal");
  }

  SolveReport rep;
  if (opts.compute_rho) {
    Eigen::MatrixXd xs(n, 1);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(n, 1);
    const LinearOperator apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
      xs.col(0) = v;
      detail::gauss_seidel_sweep(j, zero, xs);
      y = xs.col(0);
    };
    PowerOptions popts;
    popts.seed = opts.seed;
    rep.rho_predicted = operator_spectral_radius(apply, n, popts).value;
  }

  const Eigen::MatrixXd h_mat = h;
  const OrthogonalProjector orth(h_mat);

  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, 1);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, 1);
  const Eigen::MatrixXd b_mat = b;

  Eigen::VectorXd x_hat = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd jx_hat = Eigen::VectorXd::Zero(n);

  ConstrainedRecorder rec{&rep, orth.project(b).norm(), opts.record_iterates};
  auto record = [&]() {
    const double bound = b.dot(x_hat);
    const double fval = 0.5 * x_hat.dot(jx_hat) - bound;
    const Eigen::VectorXd res = b - jx_hat;
    rec.push(fval, bound, orth.project(res).norm(), x_hat);
    rep.flops += 8ull * n;
  };
  record();

  if (stop.max_iters() == 0) {
    finish(rep, x_hat, 0, false, SolveStatus::max_iterations);
    return rep;
  }
  if (stop.satisfied(rec.state(0))) {
    finish(rep, x_hat, 0, true, SolveStatus::converged);
    return rep;
  }

  long k = 0;
  bool converged = false;
  while (k < stop.max_iters()) {
    ++k;
    detail::gauss_seidel_sweep(j, b_mat, u);
    detail::gauss_seidel_sweep(j, h_mat, v);
    const Eigen::VectorXd ju = j.matvec(Eigen::VectorXd(u.col(0)));
    const Eigen::VectorXd jv = j.matvec(Eigen::VectorXd(v.col(0)));
    const double hv = h.dot(v.col(0));
    if (std::abs(hv) > 1e-300) {
      const double s = h.dot(u.col(0)) / hv;
      x_hat = u.col(0) - s * v.col(0);
      jx_hat = ju - s * jv;
    } else {
      x_hat = u.col(0);
      jx_hat = ju;
    }
    rep.flops += 8ull * n * n + 12ull * n;
    record();
    if (stop.satisfied(rec.state(k))) {
      converged = true;
      break;
    }
  }
  finish(rep, x_hat, k, converged, SolveStatus::max_iterations);
  return rep;
}

SolveReport gs_two_solve_composition(const SymMatrix& j, const Eigen::VectorXd& b,
                                     const StoppingRule& stop,
                                     const SolverOptions& opts) {
  return gs_two_solve_composition(j, b, Eigen::VectorXd::Ones(j.size()), stop, opts);
}

}  // namespace crb
