#include "crbkit/spectral.hpp"

#include "crbkit/errors.hpp"
#include "crbkit/preconditioner.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace crb {

namespace detail {

Eigen::VectorXd seeded_unit_vector(Eigen::Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = gauss(rng);
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v(0) = 1.0;
    return v;
  }
  return v / norm;
}

namespace {

// Rayleigh-quotient power iteration on a symmetric operator. Returns the
// dominant (largest magnitude) eigenvalue with its sign.
RadiusEstimate dominant_symmetric(const LinearOperator& apply, Eigen::Index dim,
                                  const PowerOptions& opts) {
  RadiusEstimate est;
  Eigen::VectorXd x = seeded_unit_vector(dim, opts.seed);
  Eigen::VectorXd y(dim);
  double prev = 0.0;
  for (long k = 1; k <= opts.max_iters; ++k) {
    apply(x, y);
    const double rayleigh = x.dot(y);
    const double norm = y.norm();
    est.iterations = k;
    est.value = rayleigh;
    if (norm == 0.0) {
      // x is (numerically) in the kernel and no direction grows: operator
      // restricted to the reachable space is zero.
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    if (k > 1 &&
        std::abs(rayleigh - prev) <= opts.tol * std::max(std::abs(rayleigh), 1e-300)) {
      est.converged = true;
      return est;
    }
    prev = rayleigh;
    x = y / norm;
  }
  return est;
}

}  // namespace
}  // namespace detail

RadiusEstimate operator_spectral_radius(const LinearOperator& apply,
                                        Eigen::Index dim,
                                        const PowerOptions& opts) {
  return operator_spectral_radius(apply, detail::seeded_unit_vector(dim, opts.seed),
                                  opts);
}

RadiusEstimate operator_spectral_radius(const LinearOperator& apply,
                                        const Eigen::VectorXd& start,
                                        const PowerOptions& opts) {
  RadiusEstimate est;
  const Eigen::Index dim = start.size();
  Eigen::VectorXd x = start / start.norm();
  Eigen::VectorXd y(dim);
  double prev = -1.0;
  for (long k = 1; k <= opts.max_iters; ++k) {
    apply(x, y);
    const double growth = y.norm();
    est.iterations = k;
    est.value = growth;
    if (growth == 0.0) {
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    if (k > 1 && std::abs(growth - prev) <= opts.tol * std::max(growth, 1e-300)) {
      est.converged = true;
      return est;
    }
    prev = growth;
    x = y / growth;
  }
  return est;
}

SpectralSummary operator_extremes(const LinearOperator& apply, Eigen::Index dim,
                                  const PowerOptions& opts) {
  SpectralSummary out;
  const RadiusEstimate dominant = detail::dominant_symmetric(apply, dim, opts);
  // Shifted operator mu*I - A (or A - mu*I) is PSD once |mu| dominates, so a
  // second pass recovers the opposite extreme.
  const double mu = dominant.value;
  PowerOptions shifted_opts = opts;
  shifted_opts.seed = opts.seed + 1;
  const LinearOperator shifted = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    apply(x, y);
    if (mu >= 0.0) {
      y = mu * x - y;  // mu*I - A
    } else {
      y = y - mu * x;  // A - mu*I
    }
  };
  const RadiusEstimate other = detail::dominant_symmetric(shifted, dim, shifted_opts);
  if (mu >= 0.0) {
    out.lambda_max = mu;
    out.lambda_min = mu - other.value;
  } else {
    out.lambda_min = mu;
    out.lambda_max = mu + other.value;
  }
  out.spectral_radius = std::max(std::abs(out.lambda_max), std::abs(out.lambda_min));
  out.condition_estimate = out.lambda_min > 0.0
                               ? std::max(out.lambda_max / out.lambda_min, 1.0)
                               : std::numeric_limits<double>::infinity();
  out.converged = dominant.converged && other.converged;
  out.iterations = dominant.iterations + other.iterations;
  return out;
}

SpectralSummary power_extremes(const SymMatrix& a, const PowerOptions& opts) {
  const LinearOperator apply = [&a](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y = a.matvec(x);
  };
  return operator_extremes(apply, a.size(), opts);
}

SpectralSummary power_extremes(const SymMatrix& a, long iters, double tol,
                               std::uint64_t seed) {
  PowerOptions opts;
  opts.max_iters = iters;
  opts.tol = tol;
  opts.seed = seed;
  return power_extremes(a, opts);
}

double iteration_matrix_radius(const Preconditioner& p, const SymMatrix& j,
                               const PowerOptions& opts) {
  if (p.size() != j.size()) {
    throw DimensionMismatch("iteration_matrix_radius: preconditioner and matrix sizes differ");
  }
  Eigen::VectorXd jx(j.size());
  const LinearOperator apply = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    jx = j.matvec(x);
    y = x - p.apply_inverse(jx);
  };
  return operator_spectral_radius(apply, j.size(), opts).value;
}

double iteration_matrix_radius(const Preconditioner& p, const SymMatrix& j,
                               long iters, double tol, std::uint64_t seed) {
  PowerOptions opts;
  opts.max_iters = iters;
  opts.tol = tol;
  opts.seed = seed;
  return iteration_matrix_radius(p, j, opts);
}

}  // namespace crb
