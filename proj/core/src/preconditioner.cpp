#include "crbkit/preconditioner.hpp"

#include "crbkit/errors.hpp"
#include "crbkit/spectral.hpp"

namespace crb {

Preconditioner Preconditioner::identity(Eigen::Index n) {
  if (n < 1) throw DimensionMismatch("preconditioner size must be >= 1");
  return Preconditioner(Kind::identity, n);
}

Preconditioner Preconditioner::diagonal(const Eigen::VectorXd& d) {
  if (d.size() < 1) throw DimensionMismatch("preconditioner size must be >= 1");
  if ((d.array() <= 0.0).any()) {
    throw NotPositiveDefinite("diagonal preconditioner requires strictly positive entries");
  }
  Preconditioner p(Kind::diagonal, d.size());
  p.diag_ = d;
  return p;
}

Preconditioner Preconditioner::complete_data(const Eigen::VectorXd& theta,
                                             double alpha) {
  if (theta.size() < 1) throw DimensionMismatch("preconditioner size must be >= 1");
  if (alpha <= 0.0 || (theta.array() <= 0.0).any()) {
    throw NotPositiveDefinite("complete-data preconditioner requires alpha > 0 and theta > 0");
  }
  Preconditioner p(Kind::complete_data, theta.size());
  p.diag_ = alpha * theta.cwiseInverse();
  return p;
}

Preconditioner Preconditioner::dense(const Eigen::MatrixXd& m) {
  if (m.rows() < 1 || m.rows() != m.cols()) {
    throw DimensionMismatch("dense preconditioner must be square with n >= 1");
  }
  Preconditioner p(Kind::custom_dense, m.rows());
  p.dense_ = 0.5 * (m + m.transpose());
  auto fac = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(p.dense_);
  if (fac->info() != Eigen::Success) {
    throw NotPositiveDefinite("dense preconditioner is not positive definite");
  }
  p.llt_ = std::move(fac);
  return p;
}

Preconditioner Preconditioner::diagonal_of(const SymMatrix& j) {
  return diagonal(j.diagonal());
}

Preconditioner Preconditioner::jacobi_scaled(const SymMatrix& j, double margin,
                                             std::uint64_t seed) {
  const Eigen::VectorXd d = j.diagonal();
  if ((d.array() <= 0.0).any()) {
    throw NotPositiveDefinite("jacobi_scaled requires a positive diagonal");
  }
  // lambda_1(D^{-1} J) via the similar symmetric operator D^{ -1/2} J D^{-1/2}.
  const Eigen::VectorXd dinv_sqrt = d.cwiseSqrt().cwiseInverse();
  const LinearOperator apply = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y = dinv_sqrt.asDiagonal() * j.matvec(Eigen::VectorXd(dinv_sqrt.asDiagonal() * x));
  };
  PowerOptions opts;
  opts.seed = seed;
  const SpectralSummary s = operator_extremes(apply, j.size(), opts);
  double scale = (1.0 + margin) * s.lambda_max;
  if (!s.converged || scale <= 0.0) {
    // Gershgorin fallback: max row sum over diagonal is a true upper bound.
    double bound = 0.0;
    for (Eigen::Index i = 0; i < j.size(); ++i) {
      bound = std::max(bound, j.dense().row(i).cwiseAbs().sum() / d(i));
    }
    scale = bound;
  }
  return diagonal(scale * d);
}

Preconditioner Preconditioner::diagonally_dominant(const SymMatrix& j) {
  return diagonal(j.dense().cwiseAbs().rowwise().sum());
}

const char* Preconditioner::kind_name() const {
  switch (kind_) {
    case Kind::identity: return "identity";
    case Kind::diagonal: return "diagonal";
    case Kind::complete_data: return "complete-data";
    case Kind::custom_dense: return "custom-dense";
  }
  return "unknown";
}

Eigen::VectorXd Preconditioner::apply_inverse(const Eigen::VectorXd& x) const {
  if (x.size() != n_) throw DimensionMismatch("apply_inverse: size mismatch");
  switch (kind_) {
    case Kind::identity: return x;
    case Kind::diagonal:
    case Kind::complete_data: return diag_.cwiseInverse().cwiseProduct(x);
    case Kind::custom_dense: return llt_->solve(x);
  }
  throw InternalError("unreachable preconditioner kind");
}

Eigen::MatrixXd Preconditioner::apply_inverse(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), x.cols());
  apply_inverse_into(x, out);
  return out;
}

void Preconditioner::apply_inverse_into(const Eigen::MatrixXd& x,
                                        Eigen::MatrixXd& out) const {
  if (x.rows() != n_) throw DimensionMismatch("apply_inverse: size mismatch");
  switch (kind_) {
    case Kind::identity:
      out = x;
      return;
    case Kind::diagonal:
    case Kind::complete_data:
      out = diag_.cwiseInverse().asDiagonal() * x;
      return;
    case Kind::custom_dense:
      out = llt_->solve(x);
      return;
  }
  throw InternalError("unreachable preconditioner kind");
}

Eigen::MatrixXd Preconditioner::apply(const Eigen::MatrixXd& x) const {
  if (x.rows() != n_) throw DimensionMismatch("apply: size mismatch");
  switch (kind_) {
    case Kind::identity: return x;
    case Kind::diagonal:
    case Kind::complete_data: return diag_.asDiagonal() * x;
    case Kind::custom_dense: return dense_ * x;
  }
  throw InternalError("unreachable preconditioner kind");
}

Eigen::MatrixXd Preconditioner::materialize() const {
  switch (kind_) {
    case Kind::identity: return Eigen::MatrixXd::Identity(n_, n_);
    case Kind::diagonal:
    case Kind::complete_data: return Eigen::MatrixXd(diag_.asDiagonal());
    case Kind::custom_dense: return dense_;
  }
  throw InternalError("unreachable preconditioner kind");
}

std::uint64_t Preconditioner::apply_inverse_flops_per_column() const {
  switch (kind_) {
    case Kind::identity: return 0;
    case Kind::diagonal:
    case Kind::complete_data: return static_cast<std::uint64_t>(n_);
    case Kind::custom_dense:
      return 2ull * static_cast<std::uint64_t>(n_) * static_cast<std::uint64_t>(n_);
  }
  return 0;
}

double majorization_margin(const Preconditioner& p, const SymMatrix& j,
                           std::uint64_t seed) {
  if (p.size() != j.size()) {
    throw DimensionMismatch("majorization_margin: size mismatch");
  }
  const SymMatrix gap(p.materialize() - j.dense());
  PowerOptions opts;
  opts.seed = seed;
  return power_extremes(gap, opts).lambda_min;
}

}  // namespace crb
