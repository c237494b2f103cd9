#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>

namespace crb {

/// Dense symmetric matrix with a shared flop counter.
///
/// The counter follows a coarse accounting convention used throughout the
/// library (it feeds the breakeven reports, so the constants are part of the
/// contract):
///   - matvec: 2n^2 per column
///   - Cholesky factorization: n^3/3 (integer division), charged once; the
///     factor is cached and later solves charge only the triangular solves
///   - triangular solve pair: 2n^2 per column
///   - symmetric eigendecomposition: 9n^3, charged once (cached)
///   - pseudoinverse apply: 4n^2 per column
///
/// The matrix itself is immutable after construction; the counter is atomic
/// so concurrent solves on a shared matrix stay consistent.
class SymMatrix {
 public:
  /// Builds from any square matrix; the strict lower triangle is ignored and
  /// both triangles are assigned from the same value, so the result is
  /// exactly symmetric.
  explicit SymMatrix(const Eigen::MatrixXd& a);

  static SymMatrix identity(Eigen::Index n);
  static SymMatrix from_diagonal(const Eigen::VectorXd& d);

  Eigen::Index size() const { return data_.rows(); }
  const Eigen::MatrixXd& dense() const { return data_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return data_(i, j); }
  Eigen::VectorXd diagonal() const { return data_.diagonal(); }

  /// A*x. Charges 2n^2 flops per column of x.
  Eigen::VectorXd matvec(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd matvec(const Eigen::MatrixXd& x) const;
  /// Allocation-free variant for solver hot loops; same accounting.
  void matvec_into(const Eigen::MatrixXd& x, Eigen::MatrixXd& out) const;

  /// A^{-1} B via Cholesky. Requires positive definiteness; throws
  /// NotPositiveDefinite otherwise. First call charges n^3/3 + 2n^2*cols(B),
  /// subsequent calls reuse the cached factor and charge 2n^2*cols(B).
  Eigen::MatrixXd direct_solve(const Eigen::MatrixXd& b) const;

  /// A^+ B via a symmetric eigendecomposition, treating eigenvalues below
  /// rank_tol * lambda_max as zero. rank_tol < 0 selects the default
  /// 1e-12 * lambda_max cutoff.
  Eigen::MatrixXd pseudoinverse_apply(const Eigen::MatrixXd& b,
                                      double rank_tol = -1.0) const;

  std::uint64_t flops() const { return flops_.load(std::memory_order_relaxed); }
  void reset_flops() const { flops_.store(0, std::memory_order_relaxed); }
  void add_flops(std::uint64_t f) const {
    flops_.fetch_add(f, std::memory_order_relaxed);
  }

  SymMatrix(const SymMatrix& other);
  SymMatrix& operator=(const SymMatrix& other);
  SymMatrix(SymMatrix&& other) noexcept;
  SymMatrix& operator=(SymMatrix&& other) noexcept;
  ~SymMatrix() = default;

 private:
  using Llt = Eigen::LLT<Eigen::MatrixXd>;
  using Eigh = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>;

  const Llt& cholesky() const;
  const Eigh& eigendecomposition() const;

  Eigen::MatrixXd data_;
  mutable std::atomic<std::uint64_t> flops_{0};
  mutable std::mutex cache_mutex_;
  mutable std::shared_ptr<const Llt> llt_;
  mutable std::shared_ptr<const Eigh> eigh_;
};

}  // namespace crb
