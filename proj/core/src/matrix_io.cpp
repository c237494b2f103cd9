#include "crbkit/matrix_io.hpp"

#include "crbkit/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace crb {

Eigen::MatrixXd read_dense_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open matrix file: " + path.string());
  }
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows < 1 || cols < 1) {
    throw IoError("bad matrix header in " + path.string() +
                  " (expected 'n m' with n, m >= 1)");
  }
  Eigen::MatrixXd a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(in >> a(i, j))) {
        std::ostringstream msg;
        msg << "truncated or non-numeric matrix data in " << path.string()
            << " at entry (" << i << ", " << j << ")";
        throw IoError(msg.str());
      }
    }
  }
  return a;
}

void write_dense_matrix(const std::filesystem::path& path,
                        const Eigen::MatrixXd& a) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open matrix file for writing: " + path.string());
  }
  out << a.rows() << " " << a.cols() << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", a(i, j));
      out << buf << (j + 1 < a.cols() ? " " : "");
    }
    out << "\n";
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

SymMatrix read_sym_matrix(const std::filesystem::path& path) {
  Eigen::MatrixXd a = read_dense_matrix(path);
  if (a.rows() != a.cols()) {
    throw IoError("matrix in " + path.string() + " is not square");
  }
  return SymMatrix(a);
}

}  // namespace crb
