#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ebgmrf/rng.hpp"
#include "ebgmrf/system.hpp"

namespace ebgmrf {

/// Perturbation sampler for N(mu~, Q~^{-1}): perturbs the right hand side
/// with square-root noise from every additive part of Q~ and solves once
/// with PCG. Per-voxel likelihood factors are computed once at construction.
class PosteriorSampler {
 public:
  PosteriorSampler(const PosteriorSystem& system, double pcg_tol = 1e-8, int pcg_max_iter = 2000);

  const Eigen::VectorXd& mean() const { return mu_; }
  const PosteriorSystem& system() const { return *system_; }

  /// One exact draw (up to PCG tolerance). Streams derived from the caller's
  /// rng, so draws with distinct child streams can run concurrently.
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  const PosteriorSystem* system_;
  double tol_;
  int max_iter_;
  Eigen::VectorXd b_, diag_, mu_;
  std::vector<double> chol_;  // N * K * K lower factors of lambda_n Q~_n
};

/// Convenience one-shot draw.
Eigen::VectorXd sample_posterior(const PosteriorSystem& system, std::uint64_t seed,
                                 double pcg_tol = 1e-8);

}  // namespace ebgmrf
