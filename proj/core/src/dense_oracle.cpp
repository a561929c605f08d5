#include "ebgmrf/dense_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace ebgmrf {

Eigen::MatrixXd DenseOracle::dense_core(const PrecisionOperator& op) {
  if (op.kind() == PriorKind::GS) return Eigen::MatrixXd::Identity(op.dim(), op.dim());
  return Eigen::MatrixXd(*op.core_matrix());
}

Eigen::MatrixXd DenseOracle::dense_prior(const PrecisionOperator& op) {
  const Eigen::MatrixXd core = dense_core(op);
  switch (op.kind()) {
    case PriorKind::GS: return op.tau2() * core;
    case PriorKind::ICAR1:
    case PriorKind::M1: return op.tau2() * core;
    default: return op.tau2() * core * core;
  }
}

DenseOracle::DenseOracle(const PosteriorSystem& system, Eigen::Index max_dim) {
  const Eigen::Index k = system.k(), n = system.n(), dim = system.dim();
  if (dim > max_dim) throw std::invalid_argument("DenseOracle: dimension too large");
  q_ = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index kk = 0; kk < k; ++kk)
    q_.block(kk * n, kk * n, n, n) = dense_prior(system.priors()[static_cast<std::size_t>(kk)]);
  const auto& lik = system.likelihood();
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    if (lik.is_zeroed(vox)) continue;
    const Eigen::MatrixXd blk = lik.lambda[vox] * lik.block(vox);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) q_(a * n + vox, b * n + vox) += blk(a, b);
  }
}

const Eigen::LLT<Eigen::MatrixXd>& DenseOracle::llt() const {
  if (!have_llt_) {
    llt_.compute(q_);
    if (llt_.info() != Eigen::Success)
      throw std::runtime_error("DenseOracle: Q~ is not positive definite");
    have_llt_ = true;
  }
  return llt_;
}

double DenseOracle::log_det() const {
  const auto& l = llt().matrixLLT();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
  return 2.0 * acc;
}

const Eigen::MatrixXd& DenseOracle::inverse() const {
  if (!have_inv_) {
    inv_ = llt().solve(Eigen::MatrixXd::Identity(q_.rows(), q_.cols()));
    have_inv_ = true;
  }
  return inv_;
}

Eigen::VectorXd DenseOracle::solve(const Eigen::Ref<const Eigen::VectorXd>& b) const {
  return llt().solve(b);
}

double DenseOracle::trace_inv_times(const Eigen::Ref<const Eigen::MatrixXd>& t) const {
  return inverse().cwiseProduct(t).sum();
}

}  // namespace ebgmrf
