#pragma once

#include "crbkit/preconditioner.hpp"
#include "crbkit/report.hpp"
#include "crbkit/stopping.hpp"
#include "crbkit/sym_matrix.hpp"

#include <Eigen/Dense>

#include <optional>

namespace crb {

/// Quadratic matrix program min_X 1/2 tr(X^T J X) - tr(B^T X), whose unique
/// minimizer is J^{-1} B. Columns of B select the CRB entries of interest
/// (B = e_k targets a single diagonal entry).
struct QmpProblem {
  SymMatrix j;
  Eigen::MatrixXd b;

  QmpProblem(SymMatrix j_in, Eigen::MatrixXd b_in);
  Eigen::Index size() const { return j.size(); }
  Eigen::Index rhs_count() const { return b.cols(); }
};

/// F(X) = 1/2 tr(X^T J X) - tr(B^T X). Equals -1/2 tr(B^T J^{-1} B) at the
/// minimizer.
double objective(const QmpProblem& prob, const Eigen::MatrixXd& x);

/// MM / preconditioned Jacobi iteration
///   X_{k+1} = X_k + P^{-1} (B - J X_k),
/// run jointly on all columns. The objective trajectory is nonincreasing
/// whenever P - J is PSD; an increase beyond 1e-8 relative slack falsifies
/// the majorization precondition and raises MonotonicityViolation.
SolveReport solve_mm(const QmpProblem& prob, const Preconditioner& p,
                     const Eigen::MatrixXd& x0, const StoppingRule& stop,
                     const SolverOptions& opts = {});
/// Same with the canonical x0 = 0 (keeps the lower-bound property from
/// iteration 0).
SolveReport solve_mm(const QmpProblem& prob, const Preconditioner& p,
                     const StoppingRule& stop, const SolverOptions& opts = {});

/// Search-direction rule for the gradient-descent family. Steepest descent,
/// CG and PCG use exact line searches (closed form for quadratics) column by
/// column; Richardson and Gauss-Seidel advance all columns jointly.
struct DirectionRule {
  enum class Kind { steepest, richardson, gauss_seidel, cg, pcg };

  static DirectionRule steepest();
  /// omega <= 0 selects the stable default 2 / (lambda_1 + lambda_n).
  static DirectionRule richardson(double omega = 0.0);
  /// Cyclic exact coordinate minimization; one iteration = one full sweep.
  static DirectionRule gauss_seidel();
  static DirectionRule cg();
  static DirectionRule pcg(Preconditioner p);

  const char* name() const;

  Kind kind = Kind::cg;
  double omega = 0.0;
  std::optional<Preconditioner> precond;
};

SolveReport solve_gd(const QmpProblem& prob, const DirectionRule& rule,
                     const Eigen::MatrixXd& x0, const StoppingRule& stop,
                     const SolverOptions& opts = {});
SolveReport solve_gd(const QmpProblem& prob, const DirectionRule& rule,
                     const StoppingRule& stop, const SolverOptions& opts = {});

namespace detail {
/// One cyclic exact-coordinate-minimization sweep over every column of x.
void gauss_seidel_sweep(const SymMatrix& j, const Eigen::MatrixXd& b,
                        Eigen::MatrixXd& x);
}  // namespace detail

}  // namespace crb
