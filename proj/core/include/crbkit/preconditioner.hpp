#pragma once

#include "crbkit/sym_matrix.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>

namespace crb {

/// Positive-definite operator P with a cheap inverse apply. For MM validity
/// P - J must additionally be PSD; majorization_margin() exposes that check.
class Preconditioner {
 public:
  enum class Kind { identity, diagonal, complete_data, custom_dense };

  static Preconditioner identity(Eigen::Index n);
  /// diag(d), d > 0 entrywise.
  static Preconditioner diagonal(const Eigen::VectorXd& d);
  /// Complete-data Fisher diagonal alpha * diag(1/theta_1, ..., 1/theta_n).
  static Preconditioner complete_data(const Eigen::VectorXd& theta, double alpha);
  /// Arbitrary SPD matrix; factored once on construction.
  static Preconditioner dense(const Eigen::MatrixXd& p);

  /// diag(J) as-is. Not a majorizer in general; see jacobi_scaled.
  static Preconditioner diagonal_of(const SymMatrix& j);
  /// c * diag(J) with c = (1 + margin) * lambda_1(diag(J)^{-1} J) estimated by
  /// power iteration, which makes P - J PSD up to the estimation margin.
  static Preconditioner jacobi_scaled(const SymMatrix& j, double margin = 0.01,
                                      std::uint64_t seed = 0);
  /// diag(sum_j |J_ij|): the first-order diagonally dominant majorizer
  /// (Gershgorin guarantees P - J PSD).
  static Preconditioner diagonally_dominant(const SymMatrix& j);

  Kind kind() const { return kind_; }
  Eigen::Index size() const { return n_; }
  const char* kind_name() const;

  Eigen::VectorXd apply_inverse(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply_inverse(const Eigen::MatrixXd& x) const;
  void apply_inverse_into(const Eigen::MatrixXd& x, Eigen::MatrixXd& out) const;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd materialize() const;

  /// Flop charge of one apply_inverse column under the library convention:
  /// 0 for identity, n for diagonal kinds, 2n^2 for dense.
  std::uint64_t apply_inverse_flops_per_column() const;

 private:
  Preconditioner(Kind kind, Eigen::Index n) : kind_(kind), n_(n) {}

  Kind kind_;
  Eigen::Index n_;
  Eigen::VectorXd diag_;        // diagonal kinds
  Eigen::MatrixXd dense_;       // custom_dense
  std::shared_ptr<const Eigen::LLT<Eigen::MatrixXd>> llt_;
};

/// Estimated lambda_min(P - J), the majorization margin. Nonnegative (up to
/// estimation error) iff P >= J in the PSD sense.
double majorization_margin(const Preconditioner& p, const SymMatrix& j,
                           std::uint64_t seed = 0);

}  // namespace crb
