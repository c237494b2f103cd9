#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

// Shared instance generators and independent oracles for the test suites.
// Everything is seeded so failures reproduce exactly.
namespace test_support {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = dist(rng);
  }
  return a;
}

inline Eigen::MatrixXd random_orthogonal(Eigen::Index n, std::mt19937_64& rng) {
  const Eigen::MatrixXd a = gaussian(n, n, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  return q;
}

// Q diag(lambda) Q^T with a log-uniform spectrum spanning [1/kappa, 1].
inline Eigen::MatrixXd spd_with_condition(Eigen::Index n, double kappa,
                                          std::mt19937_64& rng) {
  const Eigen::MatrixXd q = random_orthogonal(n, rng);
  Eigen::VectorXd lambda(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    lambda(i) = std::pow(kappa, -t);
  }
  return q * lambda.asDiagonal() * q.transpose();
}

// PSD with the given rank; positive eigenvalues log-spaced in [1/spread, 1].
inline Eigen::MatrixXd rank_deficient_psd(Eigen::Index n, Eigen::Index rank,
                                          double spread, std::mt19937_64& rng) {
  const Eigen::MatrixXd q = random_orthogonal(n, rng);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < rank; ++i) {
    const double t = rank > 1 ? static_cast<double>(i) / (rank - 1) : 0.0;
    lambda(i) = std::pow(spread, -t);
  }
  return q * lambda.asDiagonal() * q.transpose();
}

// Symmetric matrix with a prescribed spectrum (for spectral-oracle tests).
inline Eigen::MatrixXd symmetric_with_spectrum(const Eigen::VectorXd& lambda,
                                               std::mt19937_64& rng) {
  const Eigen::MatrixXd q = random_orthogonal(lambda.size(), rng);
  return q * lambda.asDiagonal() * q.transpose();
}

// Plain double-loop matrix-vector product, independent of Eigen's kernels.
inline Eigen::VectorXd naive_matvec(const Eigen::MatrixXd& a,
                                    const Eigen::VectorXd& x) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) acc += a(i, j) * x(j);
    y(i) = acc;
  }
  return y;
}

inline double rel_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = want.norm();
  return scale > 0.0 ? (got - want).norm() / scale : (got - want).norm();
}

}  // namespace test_support
