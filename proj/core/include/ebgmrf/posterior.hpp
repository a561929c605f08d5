#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ebgmrf/sampler.hpp"
#include "ebgmrf/system.hpp"

namespace ebgmrf {

/// Posterior mean mu~ = Q~^{-1} b by PCG.
Eigen::VectorXd posterior_mean(const PosteriorSystem& system, double pcg_tol = 1e-8,
                               int pcg_max_iter = 2000, const Eigen::VectorXd* warm = nullptr);

/// Conditional Gaussian posterior of the activity coefficients with RBMC
/// per-voxel marginal covariances.
struct PosteriorGmrf {
  Eigen::VectorXd mu;                   // K N, regressor-major
  std::vector<Eigen::MatrixXd> sigma;   // N of K x K marginal covariances
  int n_rbmc = 0;

  Eigen::Index n() const { return static_cast<Eigen::Index>(sigma.size()); }
  Eigen::VectorXd mean_col(Eigen::Index vox, Eigen::Index k, Eigen::Index n_vox) const;
};

/// Rao-Blackwellized marginal covariance of W_{.,n}: the exact inverse of the
/// voxel's K x K block plus the sample variance of the conditional means over
/// posterior draws.
std::vector<Eigen::MatrixXd> rbmc_marginal_cov(const PosteriorSystem& system,
                                               const PosteriorSampler& sampler, int n_rbmc,
                                               std::uint64_t seed);

PosteriorGmrf compute_posterior(const PosteriorSystem& system, int n_rbmc, std::uint64_t seed,
                                double pcg_tol = 1e-8);

struct Ppm {
  Eigen::VectorXd contrast;       // K
  double gamma = 0.0;             // threshold in signal units
  double display_threshold = 0.9;
  Eigen::VectorXd probability;    // per voxel
};

/// p_n = 1 - Phi((gamma - c' M_col) / sqrt(c' Sigma_n c)).
Ppm compute_ppm(const PosteriorGmrf& posterior, const Eigen::VectorXd& contrast, double gamma,
                double display_threshold = 0.9);

}  // namespace ebgmrf
