#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace crb {

enum class SolveStatus { converged, max_iterations, diverged, stalled };

const char* to_string(SolveStatus status);

/// Outcome of one iterative solve. Trajectories include the starting point,
/// so each has length iterations + 1.
struct SolveReport {
  Eigen::MatrixXd x;
  long iterations = 0;
  /// F(X_k) = 1/2 tr(X^T J X) - tr(B^T X) per iterate (least-squares
  /// objective for the singular-FIM solvers).
  std::vector<double> objective_trajectory;
  /// tr(B^T X_k): the running estimate of the targeted CRB entry.
  std::vector<double> bound_trajectory;
  /// Relative Frobenius residual per iterate.
  std::vector<double> residual_trajectory;
  std::uint64_t flops = 0;
  bool converged = false;
  SolveStatus status = SolveStatus::max_iterations;
  /// Root convergence factor predicted for the method, NaN when diagnostics
  /// were disabled or the notion does not apply.
  double rho_predicted = std::numeric_limits<double>::quiet_NaN();
  /// Filled only when SolverOptions::record_iterates is set.
  std::vector<Eigen::MatrixXd> iterate_history;
};

/// Sentinel for iterations_to_within when a fraction is never reached.
inline constexpr long kNotReached = -1;

/// For each fraction f, the first iterate index k with
/// |bound_k - ref| <= f * |ref| (Table-1 style "5%" / "0.5%" columns).
std::vector<long> iterations_to_within(const SolveReport& report, double ref,
                                       const std::vector<double>& fractions);

/// Trajectory CSV: header "iter,objective,bound_estimate,residual_norm" and
/// one row per iterate. Written atomically (temp file + rename).
void write_trajectory_csv(const std::filesystem::path& path,
                          const SolveReport& report);

/// Shared solver knobs. Diagnostics (rho_predicted and the lazy positive-
/// definiteness check) run extra power iterations whose flops are not charged
/// to the report.
struct SolverOptions {
  bool compute_rho = true;
  /// MM only: verify lambda_min(P - J) >= -1e-10 * lambda_1(J) up front.
  bool validate_majorizer = false;
  bool record_iterates = false;
  /// Consecutive objective increases tolerated by GD methods before the run
  /// is declared divergent.
  long divergence_window = 10;
  /// Throw InfeasibleStart instead of projecting an infeasible x0
  /// (constrained solvers).
  bool strict_feasibility = false;
  /// Singular-FIM solvers: permit a nonzero starting point, forfeiting the
  /// minimum-norm guarantee.
  bool allow_nonzero_start = false;
  std::uint64_t seed = 0;
};

}  // namespace crb
