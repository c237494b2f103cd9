#pragma once

#include "crbkit/sym_matrix.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>

namespace crb {

class Preconditioner;

/// Extremal-eigenvalue estimates from power iteration.
struct SpectralSummary {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double spectral_radius = 0.0;
  /// lambda_max / lambda_min when lambda_min > 0, +inf otherwise.
  double condition_estimate = 0.0;
  bool converged = false;
  long iterations = 0;
};

struct PowerOptions {
  long max_iters = 1000;
  double tol = 1e-9;
  /// Seed for the deterministic start vector, so reports are reproducible.
  std::uint64_t seed = 0;
};

using LinearOperator =
    std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Dominant |eigenvalue| of a general (square) linear operator by normalized
/// power iteration. Convergence is flagged, not enforced.
struct RadiusEstimate {
  double value = 0.0;
  bool converged = false;
  long iterations = 0;
};

RadiusEstimate operator_spectral_radius(const LinearOperator& apply,
                                        Eigen::Index dim,
                                        const PowerOptions& opts = {});

/// Variant with an explicit (nonzero) start vector, for operators whose
/// relevant dynamics live in an invariant subspace.
RadiusEstimate operator_spectral_radius(const LinearOperator& apply,
                                        const Eigen::VectorXd& start,
                                        const PowerOptions& opts = {});

/// Extremal eigenvalues of a symmetric operator given only through its
/// apply. Uses Rayleigh-quotient power iteration for the dominant eigenvalue
/// and a shifted iteration for the opposite extreme.
SpectralSummary operator_extremes(const LinearOperator& apply,
                                  Eigen::Index dim,
                                  const PowerOptions& opts = {});

/// lambda_1 and lambda_n of a dense symmetric matrix, to relative tolerance
/// opts.tol or the iteration cap (flagged in the result if not reached).
SpectralSummary power_extremes(const SymMatrix& a, const PowerOptions& opts = {});
SpectralSummary power_extremes(const SymMatrix& a, long iters, double tol,
                               std::uint64_t seed = 0);

/// Spectral radius of I - P^{-1} J, the root convergence factor of the
/// MM/Jacobi splitting with preconditioner P.
double iteration_matrix_radius(const Preconditioner& p, const SymMatrix& j,
                               const PowerOptions& opts = {});
double iteration_matrix_radius(const Preconditioner& p, const SymMatrix& j,
                               long iters, double tol = 1e-9,
                               std::uint64_t seed = 0);

namespace detail {
/// Deterministic unit-norm start vector for the power iterations.
Eigen::VectorXd seeded_unit_vector(Eigen::Index dim, std::uint64_t seed);
}  // namespace detail

}  // namespace crb
