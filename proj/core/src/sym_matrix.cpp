#include "crbkit/sym_matrix.hpp"

#include "crbkit/errors.hpp"

#include <utility>

namespace crb {

namespace {

std::uint64_t cube_over_three(Eigen::Index n) {
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  return un * un * un / 3;
}

}  // namespace

SymMatrix::SymMatrix(const Eigen::MatrixXd& a) {
  if (a.rows() < 1 || a.rows() != a.cols()) {
    throw DimensionMismatch("SymMatrix requires a square matrix with n >= 1");
  }
  const Eigen::Index n = a.rows();
  data_.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    data_(j, j) = a(j, j);
    for (Eigen::Index i = 0; i < j; ++i) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      data_(i, j) = v;
      data_(j, i) = v;
    }
  }
}

SymMatrix SymMatrix::identity(Eigen::Index n) {
  return SymMatrix(Eigen::MatrixXd::Identity(n, n));
}

SymMatrix SymMatrix::from_diagonal(const Eigen::VectorXd& d) {
  if (d.size() < 1) {
    throw DimensionMismatch("diagonal must have at least one entry");
  }
  return SymMatrix(Eigen::MatrixXd(d.asDiagonal()));
}

SymMatrix::SymMatrix(const SymMatrix& other)
    : data_(other.data_), flops_(other.flops()) {
  std::lock_guard<std::mutex> lock(other.cache_mutex_);
  llt_ = other.llt_;
  eigh_ = other.eigh_;
}

SymMatrix& SymMatrix::operator=(const SymMatrix& other) {
  if (this == &other) return *this;
  SymMatrix tmp(other);
  *this = std::move(tmp);
  return *this;
}

SymMatrix::SymMatrix(SymMatrix&& other) noexcept
    : data_(std::move(other.data_)), flops_(other.flops()) {
  llt_ = std::move(other.llt_);
  eigh_ = std::move(other.eigh_);
}

SymMatrix& SymMatrix::operator=(SymMatrix&& other) noexcept {
  if (this == &other) return *this;
  data_ = std::move(other.data_);
  flops_.store(other.flops(), std::memory_order_relaxed);
  llt_ = std::move(other.llt_);
  eigh_ = std::move(other.eigh_);
  return *this;
}

Eigen::VectorXd SymMatrix::matvec(const Eigen::VectorXd& x) const {
  if (x.size() != size()) {
    throw DimensionMismatch("matvec: vector length does not match matrix size");
  }
  add_flops(2ull * size() * size());
  return data_ * x;
}

Eigen::MatrixXd SymMatrix::matvec(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(size(), x.cols());
  matvec_into(x, out);
  return out;
}

void SymMatrix::matvec_into(const Eigen::MatrixXd& x, Eigen::MatrixXd& out) const {
  if (x.rows() != size()) {
    throw DimensionMismatch("matvec: row count does not match matrix size");
  }
  add_flops(2ull * size() * size() * static_cast<std::uint64_t>(x.cols()));
  out.noalias() = data_ * x;
}

const SymMatrix::Llt& SymMatrix::cholesky() const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  if (!llt_) {
    auto fac = std::make_shared<Llt>(data_);
    if (fac->info() != Eigen::Success) {
      throw NotPositiveDefinite("Cholesky factorization failed: matrix is not positive definite");
    }
    add_flops(cube_over_three(size()));
    llt_ = std::move(fac);
  }
  return *llt_;
}

Eigen::MatrixXd SymMatrix::direct_solve(const Eigen::MatrixXd& b) const {
  if (b.rows() != size()) {
    throw DimensionMismatch("direct_solve: row count does not match matrix size");
  }
  const Llt& fac = cholesky();
  add_flops(2ull * size() * size() * static_cast<std::uint64_t>(b.cols()));
  return fac.solve(b);
}

const SymMatrix::Eigh& SymMatrix::eigendecomposition() const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  if (!eigh_) {
    auto dec = std::make_shared<Eigh>(data_);
    if (dec->info() != Eigen::Success) {
      throw InternalError("symmetric eigendecomposition failed to converge");
    }
    add_flops(9ull * size() * size() * size());
    eigh_ = std::move(dec);
  }
  return *eigh_;
}

Eigen::MatrixXd SymMatrix::pseudoinverse_apply(const Eigen::MatrixXd& b,
                                               double rank_tol) const {
  if (b.rows() != size()) {
    throw DimensionMismatch("pseudoinverse_apply: row count does not match matrix size");
  }
  if (rank_tol < 0.0) rank_tol = 1e-12;
  const Eigh& dec = eigendecomposition();
  const Eigen::VectorXd& ev = dec.eigenvalues();
  const double lambda_max = ev.cwiseAbs().maxCoeff();
  const double cutoff = rank_tol * lambda_max;
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    inv(i) = (ev(i) > cutoff) ? 1.0 / ev(i) : 0.0;
  }
  add_flops(4ull * size() * size() * static_cast<std::uint64_t>(b.cols()));
  return dec.eigenvectors() * (inv.asDiagonal() * (dec.eigenvectors().transpose() * b));
}

}  // namespace crb
