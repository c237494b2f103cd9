#include "crbkit/stopping.hpp"

#include "crbkit/errors.hpp"

#include <cmath>

namespace crb {

StoppingRule::StoppingRule(StopKind kind, double eps, long max_iters,
                           double reference)
    : kind_(kind), eps_(eps), max_iters_(max_iters), reference_(reference) {
  if (eps <= 0.0) {
    throw Error("stopping rule requires eps > 0");
  }
  if (max_iters < 0) {
    throw Error("stopping rule requires max_iters >= 0");
  }
}

StoppingRule StoppingRule::objective_delta(double eps, long max_iters) {
  return StoppingRule(StopKind::objective_delta, eps, max_iters, 0.0);
}

StoppingRule StoppingRule::residual_norm(double eps, long max_iters) {
  return StoppingRule(StopKind::residual_norm, eps, max_iters, 0.0);
}

StoppingRule StoppingRule::bound_delta(double eps, long max_iters,
                                       double reference) {
  return StoppingRule(StopKind::bound_delta, eps, max_iters, reference);
}

bool StoppingRule::satisfied(const IterationState& s) const {
  switch (kind_) {
    case StopKind::objective_delta:
      return s.objective_delta >= 0.0 && s.objective_delta < eps_;
    case StopKind::residual_norm:
      return s.relative_residual <= eps_;
    case StopKind::bound_delta:
      if (reference_ == 0.0) {
        return std::abs(s.bound) <= eps_;
      }
      return std::abs(s.bound - reference_) <= eps_ * std::abs(reference_);
  }
  return false;
}

}  // namespace crb
