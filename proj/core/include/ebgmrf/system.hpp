#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ebgmrf/glm.hpp"
#include "ebgmrf/spatial_prior.hpp"

namespace ebgmrf {

/// The likelihood part of Q~ under the regressor-major layout
/// beta = vec(W'): per voxel a K x K block lambda_n Q~_n, plus the right
/// hand side b with entries lambda_n q~_n. Voxels in `zeroed` have their
/// block and rhs replaced by zero (cross-validation deflation).
struct LikelihoodBlocks {
  Eigen::Index k = 0, n = 0;
  Eigen::VectorXd lambda;            // N
  std::vector<double> blocks;        // N * K * K, Q~_n unscaled, column-major per block
  Eigen::MatrixXd rhs_rows;          // N x K, q~_n
  std::vector<std::uint8_t> zeroed;  // N, optional

  bool is_zeroed(Eigen::Index vox) const { return !zeroed.empty() && zeroed[static_cast<std::size_t>(vox)]; }
  Eigen::Map<const Eigen::MatrixXd> block(Eigen::Index vox) const {
    return {blocks.data() + static_cast<std::size_t>(vox) * k * k, k, k};
  }
};

LikelihoodBlocks build_likelihood_blocks(const LaggedStats& stats, const NoiseState& noise,
                                         const std::vector<std::uint8_t>* zero_voxels = nullptr);

/// Q~ = P_KN' blkdiag[lambda_n Q~_n] P_KN + blkdiag[Q_k], applied matrix-free.
class PosteriorSystem {
 public:
  PosteriorSystem(std::vector<PrecisionOperator> priors, LikelihoodBlocks lik);

  Eigen::Index k() const { return lik_.k; }
  Eigen::Index n() const { return lik_.n; }
  Eigen::Index dim() const { return lik_.k * lik_.n; }
  const std::vector<PrecisionOperator>& priors() const { return priors_; }
  const LikelihoodBlocks& likelihood() const { return lik_; }

  void apply(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  /// b = vec over regressors of lambda_n q~_n.
  Eigen::VectorXd rhs() const;

  /// Exact diag(Q~) for Jacobi preconditioning.
  Eigen::VectorXd diagonal() const;

  /// The K x K diagonal block of Q~ for one voxel (likelihood plus the
  /// prior diagonals).
  Eigen::MatrixXd voxel_block(Eigen::Index vox) const;

 private:
  std::vector<PrecisionOperator> priors_;
  LikelihoodBlocks lik_;
  Eigen::MatrixXd prior_diag_;  // N x K, cached diag(Q_k)
};

/// Assembles Q~-parts and b from the dataset statistics, the noise state and
/// one precision operator per regressor.
PosteriorSystem assemble_conditional_posterior(const LaggedStats& stats, const NoiseState& noise,
                                               std::vector<PrecisionOperator> priors,
                                               const std::vector<std::uint8_t>* zero_voxels = nullptr);

}  // namespace ebgmrf
