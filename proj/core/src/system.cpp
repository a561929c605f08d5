#include "ebgmrf/system.hpp"

#include <stdexcept>

namespace ebgmrf {

LikelihoodBlocks build_likelihood_blocks(const LaggedStats& stats, const NoiseState& noise,
                                         const std::vector<std::uint8_t>* zero_voxels) {
  const Eigen::Index n = stats.ytx.rows();
  const Eigen::Index k = stats.k;
  if (noise.lambda.size() != n) throw std::invalid_argument("build_likelihood_blocks: lambda size mismatch");
  if (stats.p > 0 && noise.a.cols() != n)
    throw std::invalid_argument("build_likelihood_blocks: AR column count mismatch");

  LikelihoodBlocks lik;
  lik.k = k;
  lik.n = n;
  lik.lambda = noise.lambda;
  lik.blocks.assign(static_cast<std::size_t>(n) * k * k, 0.0);
  lik.rhs_rows.resize(n, k);
  if (zero_voxels) lik.zeroed = *zero_voxels;

  const Eigen::VectorXd a_empty(0);
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    if (lik.is_zeroed(vox)) {
      lik.rhs_rows.row(vox).setZero();
      continue;
    }
    const Eigen::VectorXd a_col = stats.p > 0 ? Eigen::VectorXd(noise.a.col(vox)) : a_empty;
    Eigen::Map<Eigen::MatrixXd>(lik.blocks.data() + static_cast<std::size_t>(vox) * k * k, k, k) =
        likelihood_block(stats, vox, a_col);
    lik.rhs_rows.row(vox) = likelihood_rhs(stats, vox, a_col).transpose();
  }
  return lik;
}

PosteriorSystem::PosteriorSystem(std::vector<PrecisionOperator> priors, LikelihoodBlocks lik)
    : priors_(std::move(priors)), lik_(std::move(lik)) {
  if (static_cast<Eigen::Index>(priors_.size()) != lik_.k)
    throw std::invalid_argument("PosteriorSystem: one prior per regressor required");
  for (const auto& p : priors_)
    if (p.dim() != lik_.n) throw std::invalid_argument("PosteriorSystem: prior dimension mismatch");
  prior_diag_.resize(lik_.n, lik_.k);
  for (Eigen::Index kk = 0; kk < lik_.k; ++kk)
    prior_diag_.col(kk) = priors_[static_cast<std::size_t>(kk)].diagonal();
}

void PosteriorSystem::apply(const Eigen::Ref<const Eigen::VectorXd>& v,
                            Eigen::Ref<Eigen::VectorXd> out) const {
  const Eigen::Index k = lik_.k, n = lik_.n;
  if (v.size() != k * n) throw std::invalid_argument("PosteriorSystem::apply: dimension mismatch");
  for (Eigen::Index kk = 0; kk < k; ++kk)
    priors_[static_cast<std::size_t>(kk)].apply(v.segment(kk * n, n), out.segment(kk * n, n));

  Eigen::VectorXd vn(k), wn(k);
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    if (lik_.is_zeroed(vox)) continue;
    for (Eigen::Index kk = 0; kk < k; ++kk) vn[kk] = v[kk * n + vox];
    wn.noalias() = lik_.lambda[vox] * (lik_.block(vox) * vn);
    for (Eigen::Index kk = 0; kk < k; ++kk) out[kk * n + vox] += wn[kk];
  }
}

Eigen::VectorXd PosteriorSystem::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd out(dim());
  apply(v, out);
  return out;
}

Eigen::VectorXd PosteriorSystem::rhs() const {
  const Eigen::Index k = lik_.k, n = lik_.n;
  Eigen::VectorXd b(k * n);
  for (Eigen::Index kk = 0; kk < k; ++kk)
    b.segment(kk * n, n) = lik_.lambda.cwiseProduct(lik_.rhs_rows.col(kk));
  if (!lik_.zeroed.empty())
    for (Eigen::Index vox = 0; vox < n; ++vox)
      if (lik_.zeroed[static_cast<std::size_t>(vox)])
        for (Eigen::Index kk = 0; kk < k; ++kk) b[kk * n + vox] = 0.0;
  return b;
}

Eigen::VectorXd PosteriorSystem::diagonal() const {
  const Eigen::Index k = lik_.k, n = lik_.n;
  Eigen::VectorXd diag(k * n);
  for (Eigen::Index kk = 0; kk < k; ++kk) diag.segment(kk * n, n) = prior_diag_.col(kk);
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    if (lik_.is_zeroed(vox)) continue;
    const auto blk = lik_.block(vox);
    for (Eigen::Index kk = 0; kk < k; ++kk) diag[kk * n + vox] += lik_.lambda[vox] * blk(kk, kk);
  }
  return diag;
}

Eigen::MatrixXd PosteriorSystem::voxel_block(Eigen::Index vox) const {
  const Eigen::Index k = lik_.k;
  Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(k, k);
  if (!lik_.is_zeroed(vox)) blk = lik_.lambda[vox] * lik_.block(vox);
  for (Eigen::Index kk = 0; kk < k; ++kk) blk(kk, kk) += prior_diag_(vox, kk);
  return blk;
}

PosteriorSystem assemble_conditional_posterior(const LaggedStats& stats, const NoiseState& noise,
                                               std::vector<PrecisionOperator> priors,
                                               const std::vector<std::uint8_t>* zero_voxels) {
  return PosteriorSystem(std::move(priors), build_likelihood_blocks(stats, noise, zero_voxels));
}

}  // namespace ebgmrf
