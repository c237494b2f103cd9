// crbkit command-line front end: solve, bench, fss-design, fss-sweep.
//
// Exit codes: 0 converged / success, 2 solver did not converge (or diverged,
// or the right-hand side was diagnosed outside range(J)), 1 usage or input
// error.

#include "crbkit/constrained.hpp"
#include "crbkit/errors.hpp"
#include "crbkit/fss.hpp"
#include "crbkit/matrix_io.hpp"
#include "crbkit/preconditioner.hpp"
#include "crbkit/qmp.hpp"
#include "crbkit/singular.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace crb;

namespace {

struct RunConfig {
  std::string config_path;
  std::string matrix_path;
  std::string rhs = "e1";
  std::string constraints;  // path or "sum-to-zero"; empty = unconstrained
  std::string solver = "cpcg";
  std::string precond = "jacobi-scaled";
  std::string stop_kind = "residual";
  double eps = 1e-8;
  double reference = 0.0;
  bool reference_set = false;
  long max_iters = 200000;
  double omega = 0.0;
  std::optional<double> nu;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool write_trajectories = true;

  // fss
  std::string distribution_path;
  long zipf_n = 0;
  double zipf_exponent = 1.5;
  double alpha = 4.0;
  double p_rate = 0.25;
  long target_k = 1;
  std::vector<long> block;
  double search_tol = 1e-3;
  double p_lo = 1e-3;
  double delta = 1e-8;
  double tail_tol = 1e-12;
  int sweep_points = 0;
};

void atomic_write(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open output file: " + tmp.string());
    out << contents;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) {
  atomic_write(path, j.dump(2) + "\n");
}

// Flat key=value config file; keys mirror the long flags without the dashes
// prefix (eps=1e-8, max-iters=1000, ...). Values apply only to options that
// were not given on the command line, so flags always win.
void apply_config_file(const CLI::App* sub, RunConfig& cfg) {
  std::ifstream in(cfg.config_path);
  if (!in) throw IoError("cannot open config file: " + cfg.config_path);
  const auto given = [&](const char* flag) { return sub->count(flag) > 0; };
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(line_no) + " is not key=value");
    }
    const auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto as_double = [&] { return std::stod(value); };
    const auto as_long = [&] { return std::stol(value); };
    if (key == "eps") {
      if (!given("--eps")) cfg.eps = as_double();
    } else if (key == "max-iters") {
      if (!given("--max-iters")) cfg.max_iters = as_long();
    } else if (key == "seed") {
      if (!given("--seed")) cfg.seed = static_cast<std::uint64_t>(as_long());
    } else if (key == "out-dir") {
      if (!given("--out-dir")) cfg.out_dir = value;
    } else if (key == "solver") {
      if (!given("--solver")) cfg.solver = value;
    } else if (key == "precond") {
      if (!given("--precond")) cfg.precond = value;
    } else if (key == "stop") {
      if (!given("--stop")) cfg.stop_kind = value;
    } else if (key == "matrix") {
      if (!given("--matrix")) cfg.matrix_path = value;
    } else if (key == "rhs") {
      if (!given("--rhs")) cfg.rhs = value;
    } else if (key == "constraints") {
      if (!given("--constraints")) cfg.constraints = value;
    } else if (key == "distribution") {
      if (!given("--distribution")) cfg.distribution_path = value;
    } else if (key == "zipf-n") {
      if (!given("--zipf-n")) cfg.zipf_n = as_long();
    } else if (key == "zipf-exponent") {
      if (!given("--zipf-exponent")) cfg.zipf_exponent = as_double();
    } else if (key == "alpha") {
      if (!given("--alpha")) cfg.alpha = as_double();
    } else if (key == "p") {
      if (!given("--p")) cfg.p_rate = as_double();
    } else if (key == "target-k") {
      if (!given("--target-k")) cfg.target_k = as_long();
    } else if (key == "search-tol") {
      if (!given("--search-tol")) cfg.search_tol = as_double();
    } else if (key == "p-lo") {
      if (!given("--p-lo")) cfg.p_lo = as_double();
    } else if (key == "delta") {
      if (!given("--delta")) cfg.delta = as_double();
    } else if (key == "tail-tol") {
      if (!given("--tail-tol")) cfg.tail_tol = as_double();
    } else if (key == "sweep-points") {
      if (!given("--sweep-points")) cfg.sweep_points = static_cast<int>(as_long());
    } else if (key == "omega") {
      if (!given("--omega")) cfg.omega = as_double();
    } else if (key == "ref") {
      if (!given("--ref")) {
        cfg.reference = as_double();
        cfg.reference_set = true;
      }
    } else {
      throw Error("unknown config key: " + key);
    }
  }
}

Eigen::MatrixXd parse_rhs(const std::string& spec, Eigen::Index n) {
  if (!spec.empty() && spec[0] == 'e') {
    char* end = nullptr;
    const long k = std::strtol(spec.c_str() + 1, &end, 10);
    if (end != nullptr && *end == '\0' && k >= 1 && k <= n) {
      Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 1);
      b(k - 1, 0) = 1.0;
      return b;
    }
    if (end != nullptr && *end == '\0') {
      throw Error("rhs index out of range: " + spec);
    }
  }
  Eigen::MatrixXd b = read_dense_matrix(spec);
  if (b.rows() != n) {
    throw DimensionMismatch("rhs row count does not match the matrix");
  }
  return b;
}

ConstraintSet parse_constraints(const std::string& spec, Eigen::Index n) {
  if (spec.empty()) return ConstraintSet::none(n);
  if (spec == "sum-to-zero") return ConstraintSet::sum_to_zero(n);
  Eigen::MatrixXd h = read_dense_matrix(spec);
  if (h.rows() != n) {
    throw DimensionMismatch("constraint gradient rows must match the matrix");
  }
  return ConstraintSet(std::move(h));
}

Preconditioner parse_precond(const std::string& spec, const SymMatrix& j,
                             std::uint64_t seed) {
  if (spec == "identity") return Preconditioner::identity(j.size());
  if (spec == "diagonal") return Preconditioner::diagonal_of(j);
  if (spec == "jacobi-scaled") return Preconditioner::jacobi_scaled(j, 0.01, seed);
  if (spec == "diagonally-dominant") return Preconditioner::diagonally_dominant(j);
  if (spec.rfind("file:", 0) == 0) {
    return Preconditioner::dense(read_dense_matrix(spec.substr(5)));
  }
  throw Error("unknown preconditioner: " + spec);
}

StoppingRule parse_stop(const RunConfig& cfg) {
  if (cfg.stop_kind == "residual") {
    return StoppingRule::residual_norm(cfg.eps, cfg.max_iters);
  }
  if (cfg.stop_kind == "objective") {
    return StoppingRule::objective_delta(cfg.eps, cfg.max_iters);
  }
  if (cfg.stop_kind == "bound") {
    if (!cfg.reference_set) {
      throw Error("--stop bound requires --ref <reference value>");
    }
    return StoppingRule::bound_delta(cfg.eps, cfg.max_iters, cfg.reference);
  }
  throw Error("unknown stopping rule: " + cfg.stop_kind);
}

Eigen::VectorXd load_theta(const RunConfig& cfg) {
  if (!cfg.distribution_path.empty()) {
    return fss::read_flow_distribution(cfg.distribution_path);
  }
  if (cfg.zipf_n >= 1) {
    return fss::zipf_distribution(cfg.zipf_n, cfg.zipf_exponent);
  }
  throw Error("an instance requires --distribution or --zipf-n");
}

json report_to_json(const SolveReport& rep) {
  json j;
  j["iterations"] = rep.iterations;
  j["converged"] = rep.converged;
  j["status"] = to_string(rep.status);
  j["flops"] = rep.flops;
  j["rho_predicted"] = rep.rho_predicted;  // NaN serializes as null
  j["final_objective"] =
      rep.objective_trajectory.empty() ? 0.0 : rep.objective_trajectory.back();
  j["final_bound"] = rep.bound_trajectory.empty() ? 0.0 : rep.bound_trajectory.back();
  j["final_residual"] =
      rep.residual_trajectory.empty() ? 0.0 : rep.residual_trajectory.back();
  return j;
}

int run_solve(const RunConfig& cfg) {
  if (cfg.matrix_path.empty()) throw Error("solve requires --matrix");
  SymMatrix j = read_sym_matrix(cfg.matrix_path);
  const Eigen::MatrixXd b = parse_rhs(cfg.rhs, j.size());
  const StoppingRule stop = parse_stop(cfg);
  SolverOptions opts;
  opts.seed = cfg.seed;

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  json summary;
  summary["command"] = "solve";
  summary["solver"] = cfg.solver;
  summary["n"] = j.size();
  summary["m"] = b.cols();
  summary["constrained"] = !cfg.constraints.empty();
  summary["eps"] = cfg.eps;
  summary["max_iters"] = cfg.max_iters;
  summary["seed"] = cfg.seed;

  SolveReport rep;
  int exit_code = 0;
  try {
    if (cfg.solver == "mm" || cfg.solver == "steepest" || cfg.solver == "richardson" ||
        cfg.solver == "gs" || cfg.solver == "cg" || cfg.solver == "pcg") {
      if (!cfg.constraints.empty()) {
        throw Error("solver '" + cfg.solver + "' does not support --constraints");
      }
      QmpProblem prob(std::move(j), b);
      if (cfg.solver == "mm") {
        rep = solve_mm(prob, parse_precond(cfg.precond, prob.j, cfg.seed), stop, opts);
      } else if (cfg.solver == "steepest") {
        rep = solve_gd(prob, DirectionRule::steepest(), stop, opts);
      } else if (cfg.solver == "richardson") {
        rep = solve_gd(prob, DirectionRule::richardson(cfg.omega), stop, opts);
      } else if (cfg.solver == "gs") {
        rep = solve_gd(prob, DirectionRule::gauss_seidel(), stop, opts);
      } else if (cfg.solver == "cg") {
        rep = solve_gd(prob, DirectionRule::cg(), stop, opts);
      } else {
        rep = solve_gd(prob,
                       DirectionRule::pcg(parse_precond(cfg.precond, prob.j, cfg.seed)),
                       stop, opts);
      }
    } else if (cfg.solver == "landweber" || cfg.solver == "cg-normal") {
      if (!cfg.constraints.empty()) {
        throw Error("solver '" + cfg.solver + "' does not support --constraints");
      }
      SingularProblem prob(std::move(j), b);
      rep = cfg.solver == "landweber" ? solve_landweber(prob, cfg.nu, stop, opts)
                                      : solve_cg_normal(prob, stop, opts);
    } else if (cfg.solver == "cmm" || cfg.solver == "cpcg" || cfg.solver == "gp" ||
               cfg.solver == "gs2") {
      if (cfg.constraints.empty()) {
        throw Error("solver '" + cfg.solver + "' requires --constraints");
      }
      ConstraintSet constraints = parse_constraints(cfg.constraints, j.size());
      if (cfg.solver == "gs2") {
        if (b.cols() != 1 || constraints.count() != 1) {
          throw Error("gs2 requires a single rhs column and a single constraint");
        }
        const Eigen::VectorXd h = constraints.h.col(0);
        rep = gs_two_solve_composition(j, b.col(0), h, stop, opts);
      } else {
        ConstrainedQmpProblem prob(std::move(j), b, std::move(constraints));
        const Preconditioner p = parse_precond(cfg.precond, prob.j, cfg.seed);
        if (cfg.solver == "cmm") {
          rep = solve_constrained_mm(prob, p, stop, opts);
        } else if (cfg.solver == "cpcg") {
          rep = solve_constrained_pcg(prob, p, stop, opts);
        } else {
          rep = solve_gradient_projection(prob, p, stop, opts);
        }
      }
    } else {
      throw Error("unknown solver: " + cfg.solver);
    }
    exit_code = rep.converged ? 0 : 2;
  } catch (const DivergenceError& e) {
    summary["status"] = "diverged";
    summary["error"] = e.what();
    write_json(out_dir / "summary.json", summary);
    std::fprintf(stderr, "crbkit: %s\n", e.what());
    return 2;
  } catch (const NotInRange& e) {
    summary["status"] = "not-in-range";
    summary["error"] = e.what();
    write_json(out_dir / "summary.json", summary);
    std::fprintf(stderr, "crbkit: %s\n", e.what());
    return 2;
  }

  summary.update(report_to_json(rep));
  if (cfg.write_trajectories) {
    const fs::path traj = out_dir / ("trajectory_" + cfg.solver + ".csv");
    write_trajectory_csv(traj, rep);
    summary["trajectory_csv"] = traj.string();
  }
  write_json(out_dir / "summary.json", summary);
  return exit_code;
}

struct BenchInstance {
  SymMatrix j;
  Eigen::MatrixXd b;
  ConstraintSet constraints;
  std::optional<Eigen::VectorXd> theta;  // enables the complete-data preconditioner
  Eigen::Index k_used = 0;
};

BenchInstance build_bench_instance(const RunConfig& cfg) {
  if (!cfg.matrix_path.empty()) {
    SymMatrix j = read_sym_matrix(cfg.matrix_path);
    const Eigen::Index n = j.size();
    Eigen::MatrixXd b = parse_rhs(cfg.rhs, n);
    ConstraintSet constraints = cfg.constraints.empty()
                                    ? ConstraintSet::sum_to_zero(n)
                                    : parse_constraints(cfg.constraints, n);
    return BenchInstance{std::move(j), std::move(b), std::move(constraints),
                         std::nullopt, 0};
  }
  const Eigen::VectorXd theta = load_theta(cfg);
  const fss::FlowModel model(theta, cfg.alpha, cfg.p_rate);
  const Eigen::Index k_used = fss::truncation_k(model, cfg.delta);
  fss::FssFisher fisher = fss::fss_fisher(model, k_used, cfg.tail_tol);
  const Eigen::Index n = theta.size();
  if (cfg.target_k < 1 || cfg.target_k > n) {
    throw Error("--target-k out of range");
  }
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 1);
  b(cfg.target_k - 1, 0) = 1.0;
  return BenchInstance{std::move(fisher.j), std::move(b),
                       ConstraintSet::sum_to_zero(n), theta, k_used};
}

int run_bench(const RunConfig& cfg) {
  BenchInstance inst = build_bench_instance(cfg);
  const Eigen::Index n = inst.j.size();
  if (inst.b.cols() != 1) {
    throw Error("bench requires a single rhs column");
  }

  ConstrainedQmpProblem prob(std::move(inst.j), inst.b, std::move(inst.constraints));
  const Eigen::MatrixXd oracle = constrained_crb_oracle(prob);
  const double ref = (inst.b.array() * oracle.array()).sum();
  if (ref == 0.0) {
    throw Error("bench reference CRB is zero; nothing to benchmark");
  }

  const double bench_eps = cfg.eps;
  const StoppingRule stop = StoppingRule::bound_delta(bench_eps, cfg.max_iters, ref);
  SolverOptions opts;
  opts.seed = cfg.seed;

  const Preconditioner dd = Preconditioner::diagonally_dominant(prob.j);
  // FSS instances get the complete-data Fisher diagonal; raw matrix instances
  // fall back to diag(J) (which may fail the majorization check -- recorded
  // as a row status, not a fatal error).
  std::optional<Preconditioner> cf;
  if (inst.theta) {
    cf = Preconditioner::complete_data(*inst.theta, cfg.alpha);
  } else {
    cf = Preconditioner::diagonal_of(prob.j);
  }
  const char* cf_name = inst.theta ? "cmm-cf" : "cmm-diag";

  struct Row {
    std::string name;
    SolveReport report;
    std::string status = "ok";
  };
  std::vector<Row> rows;
  const auto run_one = [&](const std::string& name, auto&& fn) {
    Row row;
    row.name = name;
    try {
      row.report = fn();
      row.status = to_string(row.report.status);
    } catch (const Error& e) {
      row.status = std::string("error: ") + e.what();
    }
    rows.push_back(std::move(row));
  };

  run_one("cmm-dd", [&] { return solve_constrained_mm(prob, dd, stop, opts); });
  run_one(cf_name, [&] { return solve_constrained_mm(prob, *cf, stop, opts); });
  run_one("cpcg", [&] { return solve_constrained_pcg(prob, *cf, stop, opts); });
  run_one("gp", [&] { return solve_gradient_projection(prob, *cf, stop, opts); });
  run_one("gs-composition", [&] {
    return gs_two_solve_composition(prob.j, inst.b.col(0), prob.constraints.h.col(0),
                                    stop, opts);
  });

  std::vector<std::pair<std::string, const SolveReport*>> for_breakeven;
  for (const Row& row : rows) for_breakeven.emplace_back(row.name, &row.report);
  const fss::BreakevenReport breakeven = fss::breakeven_report(n, for_breakeven);

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  std::string csv = "solver,rho,iters_5pct,iters_0p5pct,iters_converge,flops,"
                    "within_breakeven,status\n";
  char buf[256];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    std::vector<long> marks{-1, -1};
    if (!row.report.bound_trajectory.empty()) {
      marks = iterations_to_within(row.report, ref, {0.05, 0.005});
    }
    const long converge_iters = row.report.converged ? row.report.iterations : -1;
    std::snprintf(buf, sizeof buf, "%s,%.6g,%ld,%ld,%ld,%llu,%d,%s\n",
                  row.name.c_str(), row.report.rho_predicted, marks[0], marks[1],
                  converge_iters,
                  static_cast<unsigned long long>(row.report.flops),
                  breakeven.solvers[i].within_breakeven ? 1 : 0, row.status.c_str());
    csv += buf;
  }
  atomic_write(out_dir / "bench.csv", csv);

  json summary;
  summary["command"] = "bench";
  summary["n"] = n;
  summary["target_k"] = cfg.target_k;
  summary["reference_crb"] = ref;
  summary["eps"] = bench_eps;
  summary["seed"] = cfg.seed;
  if (inst.k_used > 0) summary["k_used"] = inst.k_used;
  summary["breakeven_iterations"] = breakeven.breakeven_iterations;
  summary["direct_flops"] = breakeven.direct_flops;
  json solver_list = json::array();
  for (const Row& row : rows) {
    json r = report_to_json(row.report);
    r["solver"] = row.name;
    r["status"] = row.status;
    solver_list.push_back(std::move(r));
  }
  summary["solvers"] = std::move(solver_list);
  write_json(out_dir / "summary.json", summary);

  if (cfg.write_trajectories) {
    for (const Row& row : rows) {
      if (!row.report.objective_trajectory.empty()) {
        write_trajectory_csv(out_dir / ("trajectory_" + row.name + ".csv"), row.report);
      }
    }
  }

  for (const Row& row : rows) {
    if (!row.report.converged && row.name != "gp") return 2;
  }
  return 0;
}

fss::CrbOptions crb_options(const RunConfig& cfg) {
  fss::CrbOptions opts;
  if (cfg.solver == "oracle") {
    opts.solver = fss::RateSolver::oracle;
  } else if (cfg.solver == "cpcg") {
    opts.solver = fss::RateSolver::cpcg;
  } else if (cfg.solver == "cmm-cf") {
    opts.solver = fss::RateSolver::cmm_cf;
  } else if (cfg.solver == "cmm-dd") {
    opts.solver = fss::RateSolver::cmm_dd;
  } else {
    throw Error("fss solver must be one of oracle|cpcg|cmm-cf|cmm-dd");
  }
  opts.eps = cfg.eps;
  opts.max_iters = cfg.max_iters;
  opts.delta = cfg.delta;
  opts.tail_tol = cfg.tail_tol;
  opts.seed = cfg.seed;
  return opts;
}

int run_fss_design(const RunConfig& cfg) {
  const Eigen::VectorXd theta = load_theta(cfg);
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  fss::RateSearchOptions opts;
  opts.crb = crb_options(cfg);
  opts.search_tol = cfg.search_tol;
  opts.p_lo = cfg.p_lo;

  json summary;
  summary["command"] = "fss-design";
  summary["n"] = theta.size();
  summary["alpha"] = cfg.alpha;
  summary["solver"] = fss::to_string(opts.crb.solver);
  summary["search_tol"] = cfg.search_tol;
  summary["seed"] = cfg.seed;

  if (!cfg.block.empty()) {
    if (cfg.block.size() != 2) throw Error("--block expects two indices k l");
    // block design: minimize the joint variance tr of the block
    const Eigen::Index k_lo = cfg.block[0];
    const Eigen::Index k_hi = cfg.block[1];
    summary["block"] = {k_lo, k_hi};
    // golden-section over the block trace, reusing the scalar machinery
    double a = cfg.p_lo, b = 1.0;
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    const auto value = [&](double p) {
      return fss::crb_block_at_rate(fss::FlowModel(theta, cfg.alpha, p), k_lo, k_hi,
                                    opts.crb)
          .value;
    };
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = value(c), fd = value(d);
    while (b - a > cfg.search_tol) {
      if (fc < fd) {
        b = d; d = c; fd = fc; c = b - invphi * (b - a); fc = value(c);
      } else {
        a = c; c = d; fc = fd; d = a + invphi * (b - a); fd = value(d);
      }
    }
    const double p_star = fc < fd ? c : d;
    const double crb_star = std::min(fc, fd);
    summary["p_star"] = p_star;
    summary["crb_star"] = crb_star;
    summary["sqrt_crb_star"] = std::sqrt(std::max(crb_star, 0.0));
    if (cfg.sweep_points > 1) {
      std::vector<fss::RatePoint> sweep;
      for (int i = 0; i < cfg.sweep_points; ++i) {
        const double p_i =
            cfg.p_lo + (1.0 - cfg.p_lo) * i / (cfg.sweep_points - 1);
        const fss::CrbResult r = fss::crb_block_at_rate(
            fss::FlowModel(theta, cfg.alpha, p_i), k_lo, k_hi, opts.crb);
        fss::RatePoint pt;
        pt.p = p_i;
        pt.crb = r.value;
        pt.iterations = r.report.iterations;
        pt.flops = r.report.flops;
        sweep.push_back(pt);
      }
      fss::write_sweep_csv(out_dir / "sweep.csv", sweep);
      summary["sweep_csv"] = (out_dir / "sweep.csv").string();
    }
    write_json(out_dir / "summary.json", summary);
    return 0;
  }

  summary["target_k"] = cfg.target_k;
  const fss::RateSearchResult res = fss::optimal_rate(theta, cfg.alpha, cfg.target_k, opts);
  summary["p_star"] = res.p_star;
  summary["crb_star"] = res.crb_star;
  summary["sqrt_crb_star"] = std::sqrt(std::max(res.crb_star, 0.0));
  summary["k_used"] = res.k_used;
  summary["evaluations"] = res.evaluations;
  summary["unimodal_warning"] = res.unimodal_warning;

  if (cfg.sweep_points > 1) {
    const std::vector<fss::RatePoint> sweep =
        fss::rate_sweep(theta, cfg.alpha, cfg.target_k, cfg.sweep_points, opts);
    fss::write_sweep_csv(out_dir / "sweep.csv", sweep);
    summary["sweep_csv"] = (out_dir / "sweep.csv").string();
  }
  write_json(out_dir / "summary.json", summary);
  return 0;
}

int run_fss_sweep(const RunConfig& cfg) {
  const Eigen::VectorXd theta = load_theta(cfg);
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  fss::RateSearchOptions opts;
  opts.crb = crb_options(cfg);
  opts.p_lo = cfg.p_lo;
  const int points = cfg.sweep_points > 1 ? cfg.sweep_points : 50;
  const std::vector<fss::RatePoint> sweep =
      fss::rate_sweep(theta, cfg.alpha, cfg.target_k, points, opts);
  fss::write_sweep_csv(out_dir / "sweep.csv", sweep);

  json summary;
  summary["command"] = "fss-sweep";
  summary["n"] = theta.size();
  summary["alpha"] = cfg.alpha;
  summary["target_k"] = cfg.target_k;
  summary["points"] = points;
  summary["solver"] = fss::to_string(opts.crb.solver);
  summary["sweep_csv"] = (out_dir / "sweep.csv").string();
  write_json(out_dir / "summary.json", summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative Cramer-Rao bound computation and sketch-rate design"};
  app.require_subcommand(1);

  RunConfig cfg;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", cfg.config_path,
                    "flat key=value config file; flags override its values");
    sub->add_option("--eps", cfg.eps, "stopping tolerance");
    sub->add_option("--max-iters", cfg.max_iters, "iteration cap");
    sub->add_option("--seed", cfg.seed, "seed for all randomized internals");
    sub->add_option("--out-dir", cfg.out_dir, "output directory");
  };

  CLI::App* solve = app.add_subcommand("solve", "run one solver on a matrix instance");
  solve->add_option("--matrix", cfg.matrix_path, "symmetric matrix file")->required();
  solve->add_option("--rhs", cfg.rhs, "rhs matrix file or e<k> selector");
  solve->add_option("--constraints", cfg.constraints,
                    "constraint gradient file or 'sum-to-zero'");
  solve->add_option("--solver", cfg.solver,
                    "mm|steepest|richardson|gs|cg|pcg|landweber|cg-normal|cmm|cpcg|gp|gs2");
  solve->add_option("--precond", cfg.precond,
                    "identity|diagonal|jacobi-scaled|diagonally-dominant|file:PATH");
  solve->add_option("--stop", cfg.stop_kind, "residual|objective|bound");
  solve->add_option("--ref", cfg.reference, "reference bound for --stop bound")
      ->each([&](const std::string&) { cfg.reference_set = true; });
  solve->add_option("--omega", cfg.omega, "richardson step (<= 0 selects auto)");
  double nu_value = 0.0;
  solve->add_option("--nu", nu_value, "landweber step bound (omit for auto)")
      ->each([&](const std::string&) { cfg.nu = nu_value; });
  add_common(solve);

  CLI::App* bench = app.add_subcommand("bench", "constrained solver comparison table");
  bench->add_option("--matrix", cfg.matrix_path, "symmetric matrix file");
  bench->add_option("--rhs", cfg.rhs, "rhs selector (default e1)");
  bench->add_option("--constraints", cfg.constraints,
                    "constraint file or 'sum-to-zero' (default)");
  bench->add_option("--distribution", cfg.distribution_path, "flow distribution CSV");
  bench->add_option("--zipf-n", cfg.zipf_n, "synthetic Zipf distribution size");
  bench->add_option("--zipf-exponent", cfg.zipf_exponent, "Zipf exponent");
  bench->add_option("--alpha", cfg.alpha, "base load factor");
  bench->add_option("--p", cfg.p_rate, "sampling rate for the FSS instance");
  bench->add_option("--target-k", cfg.target_k, "target flow size (1-based)");
  bench->add_option("--delta", cfg.delta, "Fisher truncation threshold");
  bench->add_option("--tail-tol", cfg.tail_tol, "load-distribution tail tolerance");
  bench->add_flag("--trajectories,!--no-trajectories", cfg.write_trajectories,
                  "write per-solver trajectory CSVs");
  add_common(bench);

  CLI::App* design = app.add_subcommand("fss-design", "variance-optimal sampling rate");
  design->add_option("--distribution", cfg.distribution_path, "flow distribution CSV");
  design->add_option("--zipf-n", cfg.zipf_n, "synthetic Zipf distribution size");
  design->add_option("--zipf-exponent", cfg.zipf_exponent, "Zipf exponent");
  design->add_option("--alpha", cfg.alpha, "base load factor");
  design->add_option("--target-k", cfg.target_k, "target flow size (1-based)");
  design->add_option("--block", cfg.block, "joint block k l (1-based, inclusive)")
      ->expected(2);
  design->add_option("--solver", cfg.solver, "oracle|cpcg|cmm-cf|cmm-dd");
  design->add_option("--search-tol", cfg.search_tol, "golden-section width in p");
  design->add_option("--p-lo", cfg.p_lo, "lower end of the sampling-rate range");
  design->add_option("--delta", cfg.delta, "Fisher truncation threshold");
  design->add_option("--tail-tol", cfg.tail_tol, "load-distribution tail tolerance");
  design->add_option("--sweep-points", cfg.sweep_points, "also emit a sweep CSV");
  add_common(design);

  CLI::App* sweep = app.add_subcommand("fss-sweep", "p vs CRB curve");
  sweep->add_option("--distribution", cfg.distribution_path, "flow distribution CSV");
  sweep->add_option("--zipf-n", cfg.zipf_n, "synthetic Zipf distribution size");
  sweep->add_option("--zipf-exponent", cfg.zipf_exponent, "Zipf exponent");
  sweep->add_option("--alpha", cfg.alpha, "base load factor");
  sweep->add_option("--target-k", cfg.target_k, "target flow size (1-based)");
  sweep->add_option("--solver", cfg.solver, "oracle|cpcg|cmm-cf|cmm-dd");
  sweep->add_option("--p-lo", cfg.p_lo, "lower end of the sampling-rate range");
  sweep->add_option("--sweep-points", cfg.sweep_points, "grid size (default 50)");
  sweep->add_option("--delta", cfg.delta, "Fisher truncation threshold");
  sweep->add_option("--tail-tol", cfg.tail_tol, "load-distribution tail tolerance");
  add_common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    CLI::App* parsed = solve->parsed()   ? solve
                       : bench->parsed() ? bench
                       : design->parsed() ? design
                                          : sweep;
    if (!cfg.config_path.empty()) apply_config_file(parsed, cfg);
    const auto defaulted = [&](const char* flag) {
      return parsed->count(flag) == 0;
    };
    if (solve->parsed()) return run_solve(cfg);
    if (bench->parsed()) {
      if (defaulted("--eps") && cfg.eps == 1e-8) cfg.eps = 1e-6;  // Table-1 tolerance
      return run_bench(cfg);
    }
    if (design->parsed()) {
      if (defaulted("--eps") && cfg.eps == 1e-8) cfg.eps = 1e-9;
      return run_fss_design(cfg);
    }
    if (sweep->parsed()) {
      if (defaulted("--eps") && cfg.eps == 1e-8) cfg.eps = 1e-9;
      return run_fss_sweep(cfg);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "crbkit: error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "crbkit: unexpected error: %s\n", e.what());
    return 1;
  }
  return 1;
}
