#include "ebgmrf/posterior.hpp"

#include <cmath>
#include <stdexcept>

#include "ebgmrf/krylov.hpp"
#include "ebgmrf/stats.hpp"

namespace ebgmrf {

Eigen::VectorXd posterior_mean(const PosteriorSystem& system, double pcg_tol, int pcg_max_iter,
                               const Eigen::VectorXd* warm) {
  const Eigen::VectorXd b = system.rhs();
  const Eigen::VectorXd diag = system.diagonal();
  PcgOptions opts;
  opts.tol = pcg_tol;
  opts.max_iter = pcg_max_iter;
  opts.jacobi = &diag;
  opts.x0 = warm;
  auto apply = [&](const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) {
    system.apply(v, out);
  };
  return pcg_solve(apply, b, opts).x;
}

std::vector<Eigen::MatrixXd> rbmc_marginal_cov(const PosteriorSystem& system,
                                               const PosteriorSampler& sampler, int n_rbmc,
                                               std::uint64_t seed) {
  const Eigen::Index k = system.k(), n = system.n();
  const Eigen::VectorXd& mu = sampler.mean();

  // Exact conditional term: inverse of the voxel's K x K block of Q~.
  std::vector<Eigen::MatrixXd> block_inv(static_cast<std::size_t>(n));
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    const Eigen::MatrixXd blk = system.voxel_block(vox);
    Eigen::LLT<Eigen::MatrixXd> llt(blk);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("rbmc_marginal_cov: singular voxel block");
    block_inv[static_cast<std::size_t>(vox)] = llt.solve(Eigen::MatrixXd::Identity(k, k));
  }

  // Sampled term: variance over draws of the conditional mean
  // E(W_col | W_-n) = mu_n - B_n^{-1} ([Q~ d]_n - Q~_nn d_n), d = draw - mu.
  std::vector<Eigen::MatrixXd> cond_sum(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(k, 1));
  std::vector<Eigen::MatrixXd> cond_outer(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(k, k));

  std::vector<Eigen::MatrixXd> cond_means(static_cast<std::size_t>(n_rbmc));
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < n_rbmc; ++j) {
    try {
      Rng rng = Rng(seed).child(0x72626d63ull, static_cast<std::uint64_t>(j));
      const Eigen::VectorXd draw = sampler.sample(rng);
      const Eigen::VectorXd delta = draw - mu;
      const Eigen::VectorXd qd = system.apply(delta);
      Eigen::MatrixXd em(k, n);
      Eigen::VectorXd dn(k), rn(k);
      for (Eigen::Index vox = 0; vox < n; ++vox) {
        for (Eigen::Index kk = 0; kk < k; ++kk) dn[kk] = delta[kk * n + vox];
        for (Eigen::Index kk = 0; kk < k; ++kk) rn[kk] = qd[kk * n + vox];
        const Eigen::MatrixXd blk = system.voxel_block(vox);
        em.col(vox) = -block_inv[static_cast<std::size_t>(vox)] * (rn - blk * dn);
      }
      cond_means[static_cast<std::size_t>(j)] = std::move(em);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  for (int j = 0; j < n_rbmc; ++j) {
    const Eigen::MatrixXd& em = cond_means[static_cast<std::size_t>(j)];
    for (Eigen::Index vox = 0; vox < n; ++vox) {
      cond_sum[static_cast<std::size_t>(vox)] += em.col(vox);
      cond_outer[static_cast<std::size_t>(vox)] += em.col(vox) * em.col(vox).transpose();
    }
  }

  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(n));
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    const Eigen::MatrixXd mean = cond_sum[static_cast<std::size_t>(vox)] / n_rbmc;
    Eigen::MatrixXd var =
        (cond_outer[static_cast<std::size_t>(vox)] - n_rbmc * mean * mean.transpose()) /
        std::max(1, n_rbmc - 1);
    out[static_cast<std::size_t>(vox)] = block_inv[static_cast<std::size_t>(vox)] + var;
  }
  return out;
}

Eigen::VectorXd PosteriorGmrf::mean_col(Eigen::Index vox, Eigen::Index k, Eigen::Index n_vox) const {
  Eigen::VectorXd m(k);
  for (Eigen::Index kk = 0; kk < k; ++kk) m[kk] = mu[kk * n_vox + vox];
  return m;
}

PosteriorGmrf compute_posterior(const PosteriorSystem& system, int n_rbmc, std::uint64_t seed,
                                double pcg_tol) {
  PosteriorSampler sampler(system, pcg_tol);
  PosteriorGmrf post;
  post.mu = sampler.mean();
  post.sigma = rbmc_marginal_cov(system, sampler, n_rbmc, seed);
  post.n_rbmc = n_rbmc;
  return post;
}

Ppm compute_ppm(const PosteriorGmrf& posterior, const Eigen::VectorXd& contrast, double gamma,
                double display_threshold) {
  const Eigen::Index n = posterior.n();
  const Eigen::Index k = contrast.size();
  Ppm ppm;
  ppm.contrast = contrast;
  ppm.gamma = gamma;
  ppm.display_threshold = display_threshold;
  ppm.probability.resize(n);
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    const double mean = contrast.dot(posterior.mean_col(vox, k, n));
    const double var = contrast.dot(posterior.sigma[static_cast<std::size_t>(vox)] * contrast);
    if (!(var > 0.0)) throw std::runtime_error("compute_ppm: non-positive contrast variance");
    ppm.probability[vox] = 1.0 - normal_cdf((gamma - mean) / std::sqrt(var));
  }
  return ppm;
}

}  // namespace ebgmrf
