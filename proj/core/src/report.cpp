#include "crbkit/report.hpp"

#include "crbkit/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace crb {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max-iterations";
    case SolveStatus::diverged: return "diverged";
    case SolveStatus::stalled: return "stalled";
  }
  return "unknown";
}

std::vector<long> iterations_to_within(const SolveReport& report, double ref,
                                       const std::vector<double>& fractions) {
  if (ref == 0.0) {
    throw Error("iterations_to_within: reference value must be nonzero");
  }
  if (report.bound_trajectory.empty()) {
    throw Error("iterations_to_within: bound trajectory is empty");
  }
  std::vector<long> out;
  out.reserve(fractions.size());
  for (double f : fractions) {
    long hit = kNotReached;
    for (std::size_t k = 0; k < report.bound_trajectory.size(); ++k) {
      if (std::abs(report.bound_trajectory[k] - ref) <= f * std::abs(ref)) {
        hit = static_cast<long>(k);
        break;
      }
    }
    out.push_back(hit);
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

}  // namespace

void write_trajectory_csv(const std::filesystem::path& path,
                          const SolveReport& report) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw IoError("cannot open trajectory file for writing: " + tmp.string());
    }
    out << "iter,objective,bound_estimate,residual_norm\n";
    const std::size_t rows = report.objective_trajectory.size();
    for (std::size_t k = 0; k < rows; ++k) {
      out << k << "," << format_double(report.objective_trajectory[k]) << ","
          << format_double(k < report.bound_trajectory.size()
                               ? report.bound_trajectory[k]
                               : std::numeric_limits<double>::quiet_NaN())
          << ","
          << format_double(k < report.residual_trajectory.size()
                               ? report.residual_trajectory[k]
                               : std::numeric_limits<double>::quiet_NaN())
          << "\n";
    }
    if (!out) {
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace crb
