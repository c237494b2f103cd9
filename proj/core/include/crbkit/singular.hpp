#pragma once

#include "crbkit/preconditioner.hpp"
#include "crbkit/report.hpp"
#include "crbkit/stopping.hpp"
#include "crbkit/sym_matrix.hpp"

#include <Eigen/Dense>

#include <optional>

namespace crb {

/// Least-norm problem min 1/2 ||B - J X||_F for a (possibly rank-deficient)
/// PSD Fisher matrix. The minimizer reached from x0 = 0 is J^+ B, provided
/// every column of B lies in range(J); violations are diagnosed at runtime by
/// residual stagnation above range_tol * ||B||.
struct SingularProblem {
  SymMatrix j;
  Eigen::MatrixXd b;
  double range_tol = 1e-8;

  SingularProblem(SymMatrix j_in, Eigen::MatrixXd b_in, double range_tol_in = 1e-8);
  Eigen::Index size() const { return j.size(); }
  Eigen::Index rhs_count() const { return b.cols(); }
};

/// Landweber iteration X_{k+1} = X_k + (1/nu) J (B - J X_k) with
/// nu >= lambda_1(J)^2. nu = nullopt selects 1.01 * (power-iteration estimate
/// of lambda_1)^2; a supplied nu below the estimate raises InvalidStep.
///
/// With x0 = 0 every iterate stays in range(J) and the limit is the
/// minimum-norm solution J^+ B. A nonzero x0 requires
/// SolverOptions::allow_nonzero_start and converges to
/// J^+ B + (I - J^+ J) x0 instead.
SolveReport solve_landweber(const SingularProblem& prob, std::optional<double> nu,
                            const Eigen::MatrixXd& x0, const StoppingRule& stop,
                            const SolverOptions& opts = {});
SolveReport solve_landweber(const SingularProblem& prob, std::optional<double> nu,
                            const StoppingRule& stop, const SolverOptions& opts = {});

/// MM on the normal objective: X_{k+1} = X_k + P^{-1} J (B - J X_k).
/// Monotone descent of 1/2 ||B - J X||_F^2 requires P >= J^2 in the PSD
/// sense (checked when SolverOptions::validate_majorizer is set).
///
/// The limit solves J X = B. It is the minimum-norm solution J^+ B exactly
/// when P^{-1} preserves range(J) (P = nu I, or any spectral function of J);
/// a general P can excite the kernel, leaving a null-space component on top
/// of J^+ B.
SolveReport solve_normal_mm(const SingularProblem& prob, const Preconditioner& p,
                            const Eigen::MatrixXd& x0, const StoppingRule& stop,
                            const SolverOptions& opts = {});
SolveReport solve_normal_mm(const SingularProblem& prob, const Preconditioner& p,
                            const StoppingRule& stop, const SolverOptions& opts = {});

/// CG on the normal equations J^2 X = J B (J symmetric). Much faster than
/// Landweber; also converges to the minimum-norm solution from x0 = 0.
SolveReport solve_cg_normal(const SingularProblem& prob, const Eigen::MatrixXd& x0,
                            const StoppingRule& stop, const SolverOptions& opts = {});
SolveReport solve_cg_normal(const SingularProblem& prob, const StoppingRule& stop,
                            const SolverOptions& opts = {});

}  // namespace crb
