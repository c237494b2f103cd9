#pragma once

#include "crbkit/preconditioner.hpp"
#include "crbkit/report.hpp"
#include "crbkit/stopping.hpp"
#include "crbkit/sym_matrix.hpp"

#include <Eigen/Dense>

namespace crb {

/// Gradient H of p consistent, nonredundant equality constraints h(theta)=0.
/// Full column rank is verified on construction (rank-revealing QR with
/// threshold 1e-10 relative to the largest pivot). p = 0 means unconstrained.
struct ConstraintSet {
  Eigen::MatrixXd h;

  explicit ConstraintSet(Eigen::MatrixXd h_in);
  /// The sum constraint 1_n^T x = 0: H = 1_n.
  static ConstraintSet sum_to_zero(Eigen::Index n);
  static ConstraintSet none(Eigen::Index n);

  Eigen::Index dim() const { return h.rows(); }
  Eigen::Index count() const { return h.cols(); }
};

/// Orthonormal basis U of the orthogonal complement of col(H):
/// H^T U = 0, U^T U = I_{n-p}.
struct NullBasis {
  Eigen::MatrixXd u;
};

/// Deterministic rank-revealing construction of the nullspace basis. Throws
/// RankDeficientConstraints when rank(H) < cols(H).
NullBasis null_basis(const Eigen::MatrixXd& h);

/// Equality-constrained QMP: min 1/2 tr(X^T J X) - tr(B^T X) s.t. H^T X = 0.
/// J PSD suffices as long as U^T J U is nonsingular (checked lazily).
struct ConstrainedQmpProblem {
  SymMatrix j;
  Eigen::MatrixXd b;
  ConstraintSet constraints;

  ConstrainedQmpProblem(SymMatrix j_in, Eigen::MatrixXd b_in, ConstraintSet c_in);
  Eigen::Index size() const { return j.size(); }
  Eigen::Index rhs_count() const { return b.cols(); }
};

/// Closed-form reference: X* = U (U^T J U)^{-1} U^T B. This is the oracle all
/// constrained iterative solvers are checked against. Throws
/// SingularReducedFisher when the reduced matrix is not positive definite.
Eigen::MatrixXd constrained_crb_oracle(const ConstrainedQmpProblem& prob);

/// Equivalent composition for nonsingular J:
/// X* = J^{-1}B - J^{-1}H (H^T J^{-1} H)^+ H^T J^{-1} B.
Eigen::MatrixXd constrained_crb_inverse_formula(const ConstrainedQmpProblem& prob);

/// The oblique projector T = I - P^{-1} H (H^T P^{-1} H)^{-1} H^T applied by
/// the constrained MM recursion; T^2 = T and H^T T = 0.
Eigen::MatrixXd oblique_constraint_projector(const Preconditioner& p,
                                             const Eigen::MatrixXd& h);

/// Constrained MM: X_{k+1} = T (X_k + P^{-1}(B - J X_k)) with the projector
/// above, derived from the Lagrangian stationarity conditions; with p = 0 it
/// reduces exactly to solve_mm. Every iterate is feasible and the objective
/// decreases monotonically whenever P >= J.
SolveReport solve_constrained_mm(const ConstrainedQmpProblem& prob,
                                 const Preconditioner& p, const Eigen::MatrixXd& x0,
                                 const StoppingRule& stop,
                                 const SolverOptions& opts = {});
SolveReport solve_constrained_mm(const ConstrainedQmpProblem& prob,
                                 const Preconditioner& p, const StoppingRule& stop,
                                 const SolverOptions& opts = {});

/// Constrained PCG on the reduced problem (U^T J U) y = U^T B with the
/// preconditioner U^T P U applied implicitly through a saddle-point solve;
/// X = U y. Non-monotone bound trajectories are expected.
SolveReport solve_constrained_pcg(const ConstrainedQmpProblem& prob,
                                  const Preconditioner& p, const Eigen::MatrixXd& x0,
                                  const StoppingRule& stop,
                                  const SolverOptions& opts = {});
SolveReport solve_constrained_pcg(const ConstrainedQmpProblem& prob,
                                  const Preconditioner& p, const StoppingRule& stop,
                                  const SolverOptions& opts = {});

/// Full-space projected-PCG variant kept as an internal cross-check of the
/// reduced-space implementation; both converge to the same solution.
SolveReport solve_constrained_pcg_projected(const ConstrainedQmpProblem& prob,
                                            const Preconditioner& p,
                                            const Eigen::MatrixXd& x0,
                                            const StoppingRule& stop,
                                            const SolverOptions& opts = {});

/// Gradient projection: preconditioned steepest descent with the direction
/// orthogonally projected onto the feasible subspace and exact line searches.
/// Included for benchmark parity; poor performance on ill-conditioned
/// problems is expected behavior, reported through the status field.
SolveReport solve_gradient_projection(const ConstrainedQmpProblem& prob,
                                      const Preconditioner& p,
                                      const Eigen::MatrixXd& x0,
                                      const StoppingRule& stop,
                                      const SolverOptions& opts = {});
SolveReport solve_gradient_projection(const ConstrainedQmpProblem& prob,
                                      const Preconditioner& p,
                                      const StoppingRule& stop,
                                      const SolverOptions& opts = {});

/// Two Gauss-Seidel solves (J^{-1} b and J^{-1} h) composed through the
/// inverse formula x = u - v (h^T u)/(h^T v) after every sweep. One iteration
/// = one sweep of both subproblems.
SolveReport gs_two_solve_composition(const SymMatrix& j, const Eigen::VectorXd& b,
                                     const Eigen::VectorXd& h,
                                     const StoppingRule& stop,
                                     const SolverOptions& opts = {});
/// Default constraint h = 1_n (the sum-to-zero constraint).
SolveReport gs_two_solve_composition(const SymMatrix& j, const Eigen::VectorXd& b,
                                     const StoppingRule& stop,
                                     const SolverOptions& opts = {});

}  // namespace crb
