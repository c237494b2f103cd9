#pragma once

#include "crbkit/report.hpp"
#include "crbkit/sym_matrix.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace crb::fss {

/// Flow-size distribution theta with base load factor alpha (mean flows per
/// counter at p = 1) and sampling rate p; the effective load is
/// alpha' = p * alpha.
struct FlowModel {
  Eigen::VectorXd theta;
  double alpha = 0.0;
  double p = 1.0;

  FlowModel(Eigen::VectorXd theta_in, double alpha_in, double p_in);
  double alpha_prime() const { return p * alpha; }
  Eigen::Index max_size() const { return theta.size(); }
};

/// Counter-value distribution c_0..c_K under the Poisson approximation: the
/// coefficients of exp(alpha' sum_k theta_k (s^k - 1)).
struct LoadDistribution {
  Eigen::VectorXd c;

  Eigen::Index truncation() const { return c.size() - 1; }
  double tail() const { return 1.0 - c.sum(); }
};

inline constexpr Eigen::Index kDefaultTruncationCap = 1 << 21;

/// Coefficients of the load generating function up to degree k_terms, via the
/// standard recurrence for exponentials of power series (matches the nested
/// convolution of the n weighted Poisson factors). k_terms = nullopt grows K
/// until the tail mass drops below tail_tol, throwing TruncationError at the
/// cap. c_0 = exp(-alpha') exactly (for a normalized theta).
LoadDistribution load_distribution(const Eigen::VectorXd& theta, double alpha_prime,
                                   std::optional<Eigen::Index> k_terms,
                                   double tail_tol = 1e-12,
                                   Eigen::Index k_cap = kDefaultTruncationCap);

/// D[i][k] = dc_i/dtheta_k = alpha' (c_{i-k} - c_i), with c_{j<0} = 0: the
/// quasi-Toeplitz derivative structure of the load distribution.
Eigen::MatrixXd load_gradient(const Eigen::VectorXd& theta, double alpha_prime,
                              const LoadDistribution& c);

struct FssFisher {
  SymMatrix j;
  double p = 1.0;
  Eigen::Index k_used = 0;
  std::uint64_t assembly_flops = 0;
};

/// Assembles J(p) = q 1 1^T + (p/alpha') D^T W D with W = diag(1/c_i), i >= 1
/// (equivalently p alpha' G^T W G with G = D / alpha'). Rows with c_i below
/// 1e-300 are dropped with a warning. Positive definiteness is asserted via a
/// lambda_min estimate.
FssFisher fss_fisher(const FlowModel& model, std::optional<Eigen::Index> k_terms,
                     double tail_tol = 1e-12);

/// Smallest K with ||J_K - J_{K-1}||_F < delta, located by doubling then
/// bisection (the increment is the rank-one counter term of row K).
Eigen::Index truncation_k(const FlowModel& model, double delta,
                          Eigen::Index k_cap = kDefaultTruncationCap);

enum class RateSolver { oracle, cmm_dd, cmm_cf, cpcg, gp, gs_composition };

const char* to_string(RateSolver solver);

struct CrbOptions {
  RateSolver solver = RateSolver::cpcg;
  /// Relative (projected) residual tolerance for the iterative solvers.
  double eps = 1e-9;
  long max_iters = 500000;
  /// Fixed truncation; nullopt selects the delta rule below.
  std::optional<Eigen::Index> k_terms;
  double delta = 1e-8;
  double tail_tol = 1e-12;
  std::uint64_t seed = 0;
  bool compute_rho = false;
};

struct CrbResult {
  /// [I_theta^+(p)]_kk, or the trace of the requested block.
  double value = 0.0;
  /// The block submatrix B^T X* (1x1 for the scalar target).
  Eigen::MatrixXd block;
  /// g(x*, p) = F(X*); -2 g equals the value above at the optimum.
  double objective_value = 0.0;
  /// Relative disagreement between -2 F(X*) and tr(B^T X*).
  double consistency_gap = 0.0;
  Eigen::Index k_used = 0;
  SolveReport report;
};

/// CRB of theta_k (1-based flow size k) under the sum constraint 1^T x = 0 at
/// the model's sampling rate.
CrbResult crb_at_rate(const FlowModel& model, Eigen::Index k_target,
                      const CrbOptions& opts = {});
/// Joint block [k_lo, k_hi] (1-based, inclusive).
CrbResult crb_block_at_rate(const FlowModel& model, Eigen::Index k_lo,
                            Eigen::Index k_hi, const CrbOptions& opts = {});

struct RatePoint {
  double p = 0.0;
  double crb = 0.0;
  long iterations = 0;
  std::uint64_t flops = 0;
};

struct RateSearchOptions {
  CrbOptions crb;
  double search_tol = 1e-3;
  double p_lo = 1e-3;
};

struct RateSearchResult {
  double p_star = 0.0;
  double crb_star = 0.0;
  long evaluations = 0;
  bool unimodal_warning = false;
  Eigen::Index k_used = 0;
};

/// Golden-section search for p* = argmin_p [I_theta^+(p)]_kk over
/// [p_lo, 1], assuming unimodality; a coarse pre-scan flags (but does not
/// reject) non-unimodal behavior.
RateSearchResult optimal_rate(const Eigen::VectorXd& theta, double alpha,
                              Eigen::Index k_target,
                              const RateSearchOptions& opts = {});

/// (p, CRB) curve on a uniform grid, for Fig.-1-style plots.
std::vector<RatePoint> rate_sweep(const Eigen::VectorXd& theta, double alpha,
                                  Eigen::Index k_target, int points,
                                  const RateSearchOptions& opts = {});

struct BreakevenReport {
  Eigen::Index n = 0;
  /// n^3/3 + 3n^2: Cholesky plus the constrained-correction assembly.
  double direct_flops = 0.0;
  /// (n+1)^2 reference cost per recursive iteration.
  double per_iteration_reference = 0.0;
  /// ceil((n^3/3) / (n+1)^2): iterations at which recursion loses to the
  /// direct factorization.
  long breakeven_iterations = 0;

  struct SolverRow {
    std::string name;
    long iterations = 0;
    std::uint64_t flops = 0;
    double per_iteration = 0.0;
    bool converged = false;
    bool within_breakeven = false;
    std::string status;
  };
  std::vector<SolverRow> solvers;
};

BreakevenReport breakeven_report(
    Eigen::Index n,
    const std::vector<std::pair<std::string, const SolveReport*>>& solver_reports = {});

/// Truncated Zipf with the given exponent, normalized to sum to one. The
/// default synthetic stand-in for unavailable trace data.
Eigen::VectorXd zipf_distribution(Eigen::Index n, double exponent = 1.5);

/// CSV "size,proportion" (optional header). Sizes must cover 1..n with
/// strictly positive proportions; the vector is renormalized with a warning
/// when the sum is off by more than 1e-9.
Eigen::VectorXd read_flow_distribution(const std::filesystem::path& path);

/// Sweep CSV: "p,crb,sqrt_crb,iterations,flops"; written atomically.
void write_sweep_csv(const std::filesystem::path& path,
                     const std::vector<RatePoint>& sweep);

}  // namespace crb::fss
