#include "ebgmrf/sampler.hpp"

#include <Eigen/Cholesky>
#include <stdexcept>

#include "ebgmrf/krylov.hpp"

namespace ebgmrf {

PosteriorSampler::PosteriorSampler(const PosteriorSystem& system, double pcg_tol, int pcg_max_iter)
    : system_(&system), tol_(pcg_tol), max_iter_(pcg_max_iter) {
  const Eigen::Index k = system.k(), n = system.n();
  b_ = system.rhs();
  diag_ = system.diagonal();

  chol_.assign(static_cast<std::size_t>(n) * k * k, 0.0);
  const auto& lik = system.likelihood();
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    if (lik.is_zeroed(vox)) continue;
    const Eigen::MatrixXd blk = lik.lambda[vox] * lik.block(vox);
    Eigen::LLT<Eigen::MatrixXd> llt(blk);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("PosteriorSampler: factorization failure of a likelihood block");
    Eigen::Map<Eigen::MatrixXd>(chol_.data() + static_cast<std::size_t>(vox) * k * k, k, k) =
        llt.matrixL();
  }

  PcgOptions opts;
  opts.tol = tol_;
  opts.max_iter = max_iter_;
  opts.jacobi = &diag_;
  auto apply = [this](const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) {
    system_->apply(v, out);
  };
  mu_ = pcg_solve(apply, b_, opts).x;
}

Eigen::VectorXd PosteriorSampler::sample(Rng& rng) const {
  const Eigen::Index k = system_->k(), n = system_->n();
  Eigen::VectorXd bstar = b_;

  // Likelihood part: (lambda_n Q~_n)^{1/2} z per voxel.
  Eigen::VectorXd z(k), w(k);
  const auto& lik = system_->likelihood();
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    if (lik.is_zeroed(vox)) continue;
    for (Eigen::Index kk = 0; kk < k; ++kk) z[kk] = rng.normal();
    w.noalias() =
        Eigen::Map<const Eigen::MatrixXd>(chol_.data() + static_cast<std::size_t>(vox) * k * k, k, k)
            .triangularView<Eigen::Lower>() *
        z;
    for (Eigen::Index kk = 0; kk < k; ++kk) bstar[kk * n + vox] += w[kk];
  }

  // Prior parts.
  for (Eigen::Index kk = 0; kk < k; ++kk)
    system_->priors()[static_cast<std::size_t>(kk)].add_sqrt_noise(rng, bstar.segment(kk * n, n));

  PcgOptions opts;
  opts.tol = tol_;
  opts.max_iter = max_iter_;
  opts.jacobi = &diag_;
  opts.x0 = &mu_;
  auto apply = [this](const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) {
    system_->apply(v, out);
  };
  return pcg_solve(apply, bstar, opts).x;
}

Eigen::VectorXd sample_posterior(const PosteriorSystem& system, std::uint64_t seed, double pcg_tol) {
  PosteriorSampler sampler(system, pcg_tol);
  Rng rng = Rng(seed).child(0x73616d70ull);
  return sampler.sample(rng);
}

}  // namespace ebgmrf
