#pragma once

namespace crb {

enum class StopKind { objective_delta, residual_norm, bound_delta };

/// Per-iteration quantities a stopping rule may consult.
struct IterationState {
  long iteration = 0;
  /// |F_k - F_{k-1}|; negative on the first iterate where no delta exists.
  double objective_delta = -1.0;
  /// ||B - J X_k||_F / ||B||_F (absolute when ||B|| = 0).
  double relative_residual = 0.0;
  /// tr(B^T X_k), the running bound estimate.
  double bound = 0.0;
};

/// Composable convergence predicate, consulted once per iteration.
///   objective_delta(eps): stop when |F_k - F_{k-1}| < eps (Algorithm-1 style)
///   residual_norm(eps):   stop when the relative residual <= eps
///   bound_delta(eps):     stop when |bound_k - ref| <= eps * |ref|
///                         (benchmarking mode; ref comes from a direct oracle)
class StoppingRule {
 public:
  static StoppingRule objective_delta(double eps, long max_iters);
  static StoppingRule residual_norm(double eps, long max_iters);
  static StoppingRule bound_delta(double eps, long max_iters, double reference);

  StopKind kind() const { return kind_; }
  double eps() const { return eps_; }
  long max_iters() const { return max_iters_; }
  double reference() const { return reference_; }

  bool satisfied(const IterationState& s) const;

 private:
  StoppingRule(StopKind kind, double eps, long max_iters, double reference);

  StopKind kind_;
  double eps_;
  long max_iters_;
  double reference_;
};

}  // namespace crb
