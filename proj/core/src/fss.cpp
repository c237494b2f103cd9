#include "crbkit/fss.hpp"

#include "crbkit/constrained.hpp"
#include "crbkit/errors.hpp"
#include "crbkit/preconditioner.hpp"
#include "crbkit/spectral.hpp"
#include "crbkit/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace crb::fss {

namespace {

constexpr double kWeightFloor = 1e-300;

void check_theta(const Eigen::VectorXd& theta) {
  if (theta.size() < 1) {
    throw DimensionMismatch("flow-size distribution must have n >= 1 entries");
  }
  if ((theta.array() <= 0.0).any()) {
    throw Error("flow-size distribution requires theta_k > 0 for all k");
  }
}

// Coefficients of exp(sum_k a_k s^k) via E_i = (1/i) sum_j j a_j E_{i-j}.
Eigen::VectorXd exp_series(const Eigen::VectorXd& a, Eigen::Index k_terms) {
  const Eigen::Index n = a.size();
  Eigen::VectorXd e(k_terms + 1);
  e(0) = 1.0;
  for (Eigen::Index i = 1; i <= k_terms; ++i) {
    double acc = 0.0;
    const Eigen::Index jmax = std::min(i, n);
    for (Eigen::Index j = 1; j <= jmax; ++j) {
      acc += static_cast<double>(j) * a(j - 1) * e(i - j);
    }
    e(i) = acc / static_cast<double>(i);
  }
  return e;
}

}  // namespace

FlowModel::FlowModel(Eigen::VectorXd theta_in, double alpha_in, double p_in)
    : theta(std::move(theta_in)), alpha(alpha_in), p(p_in) {
  check_theta(theta);
  if (std::abs(theta.sum() - 1.0) > 1e-12) {
    throw Error("flow-size distribution must sum to 1 (within 1e-12)");
  }
  if (!(p > 0.0 && p <= 1.0)) {
    throw Error("sampling rate must lie in (0, 1]");
  }
  if (!(alpha > 0.0)) {
    throw Error("load factor alpha must be positive");
  }
}

LoadDistribution load_distribution(const Eigen::VectorXd& theta, double alpha_prime,
                                   std::optional<Eigen::Index> k_terms,
                                   double tail_tol, Eigen::Index k_cap) {
  check_theta(theta);
  if (!(alpha_prime > 0.0)) {
    throw Error("alpha' must be positive");
  }
  // The generating function is prod_k exp(a_k (s^k - 1)) with a_k computed
  // from theta as given, so finite-difference probes off the simplex stay
  // consistent with load_gradient.
  const Eigen::VectorXd a = alpha_prime * theta;
  const double prefactor = std::exp(-a.sum());

  if (k_terms) {
    if (*k_terms < 0) throw Error("k_terms must be nonnegative");
    LoadDistribution out;
    out.c = prefactor * exp_series(a, *k_terms);
    return out;
  }

  Eigen::Index k = std::max<Eigen::Index>(theta.size(), 16);
  while (true) {
    Eigen::VectorXd c = prefactor * exp_series(a, k);
    // running tail: find the smallest prefix whose mass is within tail_tol
    double acc = 0.0;
    for (Eigen::Index i = 0; i <= k; ++i) {
      acc += c(i);
      if (1.0 - acc <= tail_tol) {
        LoadDistribution out;
        out.c = c.head(i + 1);
        return out;
      }
    }
    if (k >= k_cap) {
      throw TruncationError("load-distribution tail does not reach tail_tol within the cap");
    }
    k = std::min(k_cap, 2 * k);
  }
}

Eigen::MatrixXd load_gradient(const Eigen::VectorXd& theta, double alpha_prime,
                              const LoadDistribution& c) {
  check_theta(theta);
  const Eigen::Index n = theta.size();
  const Eigen::Index rows = c.c.size();
  Eigen::MatrixXd d(rows, n);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 1; k <= n; ++k) {
      const double lagged = i >= k ? c.c(i - k) : 0.0;
      d(i, k - 1) = alpha_prime * (lagged - c.c(i));
    }
  }
  return d;
}

FssFisher fss_fisher(const FlowModel& model, std::optional<Eigen::Index> k_terms,
                     double tail_tol) {
  const Eigen::Index n = model.max_size();
  const double ap = model.alpha_prime();
  const LoadDistribution c = load_distribution(model.theta, ap, k_terms, tail_tol);
  const Eigen::Index k_used = c.truncation();
  const Eigen::MatrixXd d = load_gradient(model.theta, ap, c);

  const double q = 1.0 - model.p;
  Eigen::MatrixXd jm = q * Eigen::MatrixXd::Ones(n, n);

  // Counter-information term (p/alpha') D^T W D over retained rows i >= 1.
  Eigen::MatrixXd scaled(k_used, n);
  Eigen::Index kept = 0;
  for (Eigen::Index i = 1; i <= k_used; ++i) {
    if (c.c(i) < kWeightFloor) {
      std::fprintf(stderr,
                   "crbkit: warning: dropping counter row %ld (c_i underflow)\n",
                   static_cast<long>(i));
      continue;
    }
    scaled.row(kept++) = d.row(i) * std::sqrt(model.p / ap / c.c(i));
  }
  scaled.conservativeResize(kept, n);
  jm.noalias() += scaled.transpose() * scaled;

  FssFisher out{SymMatrix(jm), model.p, k_used,
                2ull * static_cast<std::uint64_t>(n) * n * kept +
                    2ull * static_cast<std::uint64_t>(n) * kept};
  out.j.add_flops(out.assembly_flops);

  const SpectralSummary s = power_extremes(out.j);
  if (!(s.lambda_min > 0.0)) {
    throw NotPositiveDefinite("assembled FSS Fisher matrix is not positive definite");
  }
  return out;
}

Eigen::Index truncation_k(const FlowModel& model, double delta, Eigen::Index k_cap) {
  if (!(delta > 0.0)) throw Error("delta must be positive");
  const Eigen::Index n = model.max_size();
  const double ap = model.alpha_prime();
  const Eigen::VectorXd a = ap * model.theta;
  const double prefactor = std::exp(-a.sum());

  Eigen::VectorXd c;
  const auto ensure_terms = [&](Eigen::Index k) {
    if (c.size() < k + 1) c = prefactor * exp_series(a, std::max(2 * k, Eigen::Index(16)));
  };
  // ||J_K - J_{K-1}||_F is the Frobenius norm of the rank-one counter term of
  // row K: (p/alpha') ||d_K||^2 / c_K.
  const auto increment = [&](Eigen::Index k) {
    ensure_terms(k);
    if (c(k) < kWeightFloor) return 0.0;
    double norm_sq = 0.0;
    for (Eigen::Index j = 1; j <= n; ++j) {
      const double lagged = k >= j ? c(k - j) : 0.0;
      const double v = ap * (lagged - c(k));
      norm_sq += v * v;
    }
    return model.p / ap * norm_sq / c(k);
  };
  const auto small_enough = [&](Eigen::Index k) { return increment(k) < delta; };

  Eigen::Index hi = 1;
  while (!small_enough(hi)) {
    if (hi >= k_cap) {
      throw TruncationError("truncation rule not satisfied within the cap");
    }
    hi = std::min(k_cap, 2 * hi);
  }
  Eigen::Index lo = hi / 2;  // predicate false at lo (or lo = 0)
  while (hi - lo > 1) {
    const Eigen::Index mid = lo + (hi - lo) / 2;
    if (small_enough(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

const char* to_string(RateSolver solver) {
  switch (solver) {
    case RateSolver::oracle: return "oracle";
    case RateSolver::cmm_dd: return "cmm-dd";
    case RateSolver::cmm_cf: return "cmm-cf";
    case RateSolver::cpcg: return "cpcg";
    case RateSolver::gp: return "gp";
    case RateSolver::gs_composition: return "gs-composition";
  }
  return "unknown";
}

namespace {

CrbResult solve_block(const FlowModel& model, Eigen::Index k_lo, Eigen::Index k_hi,
                      const CrbOptions& opts) {
  const Eigen::Index n = model.max_size();
  if (k_lo < 1 || k_hi > n || k_lo > k_hi) {
    throw Error("target flow sizes must satisfy 1 <= k <= l <= n");
  }
  const Eigen::Index k_used =
      opts.k_terms ? *opts.k_terms : truncation_k(model, opts.delta);
  FssFisher fisher = fss_fisher(model, k_used, opts.tail_tol);

  const Eigen::Index m = k_hi - k_lo + 1;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index c = 0; c < m; ++c) b(k_lo - 1 + c, c) = 1.0;

  ConstrainedQmpProblem prob(std::move(fisher.j), b, ConstraintSet::sum_to_zero(n));

  SolverOptions sopts;
  sopts.seed = opts.seed;
  sopts.compute_rho = opts.compute_rho;
  const StoppingRule stop = StoppingRule::residual_norm(opts.eps, opts.max_iters);

  CrbResult out;
  out.k_used = fisher.k_used;

  Eigen::MatrixXd x;
  switch (opts.solver) {
    case RateSolver::oracle:
      x = constrained_crb_oracle(prob);
      break;
    case RateSolver::cmm_dd:
      out.report = solve_constrained_mm(prob, Preconditioner::diagonally_dominant(prob.j),
                                        stop, sopts);
      x = out.report.x;
      break;
    case RateSolver::cmm_cf:
      out.report = solve_constrained_mm(
          prob, Preconditioner::complete_data(model.theta, model.alpha), stop, sopts);
      x = out.report.x;
      break;
    case RateSolver::cpcg:
      out.report = solve_constrained_pcg(
          prob, Preconditioner::complete_data(model.theta, model.alpha), stop, sopts);
      x = out.report.x;
      break;
    case RateSolver::gp:
      out.report = solve_gradient_projection(
          prob, Preconditioner::complete_data(model.theta, model.alpha), stop, sopts);
      x = out.report.x;
      break;
    case RateSolver::gs_composition: {
      if (m != 1) {
        throw Error("gs-composition supports a single target only");
      }
      out.report = gs_two_solve_composition(prob.j, b.col(0), stop, sopts);
      x = out.report.x;
      break;
    }
  }

  out.block = b.transpose() * x;
  out.value = out.block.trace();
  // The inner optimum value is -1/2 [I+]_kk, so -2 F must agree with
  // tr(B^T X*) at convergence; the gap is reported as a consistency check.
  const Eigen::MatrixXd jx = prob.j.matvec(x);
  out.objective_value = 0.5 * (x.array() * jx.array()).sum() -
                        (prob.b.array() * x.array()).sum();
  out.consistency_gap = std::abs(-2.0 * out.objective_value - out.value) /
                        std::max(1.0, std::abs(out.value));
  return out;
}

}  // namespace

CrbResult crb_at_rate(const FlowModel& model, Eigen::Index k_target,
                      const CrbOptions& opts) {
  return solve_block(model, k_target, k_target, opts);
}

CrbResult crb_block_at_rate(const FlowModel& model, Eigen::Index k_lo,
                            Eigen::Index k_hi, const CrbOptions& opts) {
  return solve_block(model, k_lo, k_hi, opts);
}

RateSearchResult optimal_rate(const Eigen::VectorXd& theta, double alpha,
                              Eigen::Index k_target, const RateSearchOptions& opts) {
  check_theta(theta);
  if (!(opts.search_tol > 0.0)) throw Error("search_tol must be positive");
  if (!(opts.p_lo > 0.0 && opts.p_lo < 1.0)) {
    throw Error("p_lo must lie in (0, 1)");
  }

  RateSearchResult out;
  const auto crb_of = [&](double p) {
    const FlowModel model(theta, alpha, p);
    const CrbResult r = crb_at_rate(model, k_target, opts.crb);
    out.k_used = r.k_used;
    ++out.evaluations;
    return r.value;
  };

  // Coarse pre-scan: flags multiple strict local minima (unimodality is an
  // assumption, not a theorem, for general theta).
  {
    constexpr int kScan = 9;
    std::vector<double> vals(kScan);
    for (int i = 0; i < kScan; ++i) {
      const double p = opts.p_lo + (1.0 - opts.p_lo) * i / (kScan - 1);
      vals[static_cast<std::size_t>(i)] = crb_of(p);
    }
    int minima = 0;
    for (int i = 1; i + 1 < kScan; ++i) {
      if (vals[i] < vals[i - 1] && vals[i] < vals[i + 1]) ++minima;
    }
    const bool left_edge = vals[0] < vals[1];
    const bool right_edge = vals[kScan - 1] < vals[kScan - 2];
    out.unimodal_warning = (minima + (left_edge ? 1 : 0) + (right_edge ? 1 : 0)) > 1;
  }

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = opts.p_lo;
  double b = 1.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = crb_of(c);
  double fd = crb_of(d);
  while (b - a > opts.search_tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = crb_of(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = crb_of(d);
    }
  }
  if (fc < fd) {
    out.p_star = c;
    out.crb_star = fc;
  } else {
    out.p_star = d;
    out.crb_star = fd;
  }
  return out;
}

std::vector<RatePoint> rate_sweep(const Eigen::VectorXd& theta, double alpha,
                                  Eigen::Index k_target, int points,
                                  const RateSearchOptions& opts) {
  check_theta(theta);
  if (points < 2) throw Error("sweep requires at least 2 points");
  std::vector<RatePoint> out;
  out.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double p = opts.p_lo + (1.0 - opts.p_lo) * i / (points - 1);
    const FlowModel model(theta, alpha, p);
    const CrbResult r = crb_at_rate(model, k_target, opts.crb);
    RatePoint pt;
    pt.p = p;
    pt.crb = r.value;
    pt.iterations = r.report.iterations;
    pt.flops = r.report.flops;
    out.push_back(pt);
  }
  return out;
}

BreakevenReport breakeven_report(
    Eigen::Index n,
    const std::vector<std::pair<std::string, const SolveReport*>>& solver_reports) {
  if (n < 1) throw DimensionMismatch("breakeven report requires n >= 1");
  BreakevenReport out;
  out.n = n;
  const double nd = static_cast<double>(n);
  const double factor_cost = nd * nd * nd / 3.0;
  out.direct_flops = factor_cost + 3.0 * nd * nd;
  out.per_iteration_reference = (nd + 1.0) * (nd + 1.0);
  out.breakeven_iterations =
      static_cast<long>(std::ceil(factor_cost / out.per_iteration_reference));
  for (const auto& [name, rep] : solver_reports) {
    BreakevenReport::SolverRow row;
    row.name = name;
    if (rep != nullptr) {
      row.iterations = rep->iterations;
      row.flops = rep->flops;
      row.per_iteration =
          rep->iterations > 0 ? static_cast<double>(rep->flops) / rep->iterations : 0.0;
      row.converged = rep->converged;
      row.within_breakeven = rep->converged && rep->iterations <= out.breakeven_iterations;
      row.status = to_string(rep->status);
    }
    out.solvers.push_back(std::move(row));
  }
  return out;
}

Eigen::VectorXd zipf_distribution(Eigen::Index n, double exponent) {
  if (n < 1) throw DimensionMismatch("zipf distribution requires n >= 1");
  Eigen::VectorXd theta(n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    theta(k - 1) = std::pow(static_cast<double>(k), -exponent);
  }
  return theta / theta.sum();
}

Eigen::VectorXd read_flow_distribution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open distribution file: " + path.string());
  }
  std::map<long, double> entries;
  std::string line;
  bool first = true;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    long size = 0;
    double proportion = 0.0;
    if (!(ls >> size >> proportion)) {
      if (first) {
        first = false;  // tolerate a header row
        continue;
      }
      throw IoError("bad distribution line " + std::to_string(line_no) + " in " +
                    path.string());
    }
    first = false;
    if (size < 1) {
      throw IoError("flow size must be >= 1 (line " + std::to_string(line_no) + ")");
    }
    if (!entries.emplace(size, proportion).second) {
      throw IoError("duplicate flow size " + std::to_string(size) + " in " +
                    path.string());
    }
  }
  if (entries.empty()) {
    throw IoError("distribution file is empty: " + path.string());
  }
  const long n = entries.rbegin()->first;
  if (static_cast<long>(entries.size()) != n) {
    throw IoError("distribution must cover every size 1..n without gaps");
  }
  Eigen::VectorXd theta(n);
  for (const auto& [size, proportion] : entries) {
    if (proportion <= 0.0) {
      throw IoError("proportions must be strictly positive (theta_k > 0)");
    }
    theta(size - 1) = proportion;
  }
  const double total = theta.sum();
  if (std::abs(total - 1.0) > 1e-9) {
    std::fprintf(stderr,
                 "crbkit: warning: distribution sums to %.12g; renormalizing\n",
                 total);
  }
  return theta / total;
}

void write_sweep_csv(const std::filesystem::path& path,
                     const std::vector<RatePoint>& sweep) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw IoError("cannot open sweep file for writing: " + tmp.string());
    }
    out << "p,crb,sqrt_crb,iterations,flops\n";
    char buf[128];
    for (const RatePoint& pt : sweep) {
      std::snprintf(buf, sizeof buf, "%.15g,%.15g,%.15g,%ld,%llu\n", pt.p, pt.crb,
                    std::sqrt(std::max(pt.crb, 0.0)), pt.iterations,
                    static_cast<unsigned long long>(pt.flops));
      out << buf;
    }
    if (!out) {
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace crb::fss
