#include <Eigen/Dense>
#include <cmath>

#include "ebgmrf/dense_oracle.hpp"
#include "ebgmrf/posterior.hpp"
#include "ebgmrf/rng.hpp"
#include "harness.hpp"
#include "helpers.hpp"
#include "support/instances.hpp"

using namespace ebgmrf;
using ebgmrf::testing::Instance;
using ebgmrf::testing::make_instance;
using ebgmrf::testing::make_system;

namespace acceptance {

namespace {

/// Mean absolute entry error of RBMC covariances against the dense blocks,
/// normalized per entry by sqrt(S_ii S_jj).
double rbmc_error(const PosteriorSystem& system, const PosteriorSampler& sampler,
                  const Eigen::MatrixXd& inv, int n_rbmc, std::uint64_t seed, double* worst) {
  const auto cov = rbmc_marginal_cov(system, sampler, n_rbmc, seed);
  const Eigen::Index n = system.n(), k = system.k();
  double acc = 0.0, mx = 0.0;
  std::int64_t count = 0;
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) {
        const double truth = inv(a * n + vox, b * n + vox);
        const double scale =
            std::sqrt(inv(a * n + vox, a * n + vox) * inv(b * n + vox, b * n + vox));
        const double e = std::abs(cov[static_cast<std::size_t>(vox)](a, b) - truth) / scale;
        acc += e;
        mx = std::max(mx, e);
        ++count;
      }
  }
  if (worst) *worst = mx;
  return acc / static_cast<double>(count);
}

}  // namespace

ACCEPTANCE_CRITERION(8, "RBMC: 5% agreement with dense blocks at 2000 draws; error ~ N^{-1/2}") {
  Instance inst = make_instance(4, 18, 0, PriorKind::M2, 8001, 0.1, 0.5);
  PosteriorSystem system = make_system(inst, 0);
  DenseOracle oracle(system);
  const Eigen::MatrixXd& inv = oracle.inverse();
  PosteriorSampler sampler(system, 1e-10);

  double worst = 0.0;
  rbmc_error(system, sampler, inv, 2000, 8002, &worst);
  ctx.note("N_RBMC = 2000: worst entry error ", worst, " (of sqrt(S_ii S_jj))");
  ctx.expect(worst <= 0.05, "per-entry error <= 5% at N_RBMC = 2000");

  // Consistency: mean error over repeats at 100 / 1000 / 10000 draws.
  const int sizes[3] = {100, 1000, 10000};
  const int reps[3] = {16, 5, 2};
  Eigen::Vector3d log_n, log_e;
  for (int i = 0; i < 3; ++i) {
    double acc = 0.0;
    for (int r = 0; r < reps[i]; ++r)
      acc += rbmc_error(system, sampler, inv, sizes[i],
                        9000 + static_cast<std::uint64_t>(i * 100 + r), nullptr);
    log_n[i] = std::log(static_cast<double>(sizes[i]));
    log_e[i] = std::log(acc / reps[i]);
    ctx.note("N_RBMC = ", sizes[i], ": mean entry error ", std::exp(log_e[i]));
  }
  const double mx = log_n.mean(), my = log_e.mean();
  const double slope = (log_n.array() - mx).cwiseProduct(log_e.array() - my).sum() /
                       (log_n.array() - mx).square().sum();
  ctx.note("log-log slope ", slope, " (target -1/2, +-15%)");
  ctx.expect(std::abs(slope + 0.5) <= 0.15 * 0.5, "slope within 15% of -1/2");
}

ACCEPTANCE_CRITERION(9, "perturbation sampler: covariance and mean match the dense inverse") {
  Instance inst = make_instance(4, 18, 0, PriorKind::M2, 9001, 0.1, 0.5);
  PosteriorSystem system = make_system(inst, 0);
  DenseOracle oracle(system);
  const Eigen::MatrixXd& cov_true = oracle.inverse();
  const Eigen::VectorXd mu_true = oracle.solve(system.rhs());
  PosteriorSampler sampler(system, 1e-10);

  const Eigen::Index dim = system.dim();
  const int draws = 5000;
  std::vector<Eigen::VectorXd> all(static_cast<std::size_t>(draws));
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < draws; ++s) {
    Rng rng = Rng(9002).child(static_cast<std::uint64_t>(s));
    all[static_cast<std::size_t>(s)] = sampler.sample(rng);
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& x : all) mean += x;
  mean /= draws;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& x : all) {
    const Eigen::VectorXd d = x - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= (draws - 1);

  const double max_var = cov_true.diagonal().maxCoeff();
  const double cov_err = (cov - cov_true).cwiseAbs().maxCoeff() / max_var;
  ctx.note("max entry error ", cov_err, " of the largest variance");
  ctx.expect(cov_err <= 0.05, "sample covariance within 5% of the dense inverse");

  double worst_z = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double se = std::sqrt(cov_true(i, i) / draws);
    worst_z = std::max(worst_z, std::abs(mean[i] - mu_true[i]) / se);
  }
  ctx.note("worst |mean - mu|/SE = ", worst_z);
  ctx.expect(worst_z <= 3.0, "sample mean within 3 SE of mu~ per coordinate");
}

ACCEPTANCE_CRITERION(10, "PPM matches empirical exceedance; monotone in gamma; contrast scaling") {
  Instance inst = make_instance(3, 16, 0, PriorKind::M2, 10001, 0.15, 0.5);
  PosteriorSystem system = make_system(inst, 0);
  DenseOracle oracle(system);
  const Eigen::VectorXd mu = oracle.solve(system.rhs());
  const Eigen::LLT<Eigen::MatrixXd> llt(oracle.inverse());

  const PosteriorGmrf post = compute_posterior(system, 2000, 10002, 1e-10);
  Eigen::VectorXd c(2);
  c << 1.0, 0.0;
  const Eigen::Index n = system.n();
  // Put the threshold at the median contrast mean so several voxels sit on
  // the steep part of the normal CDF.
  std::vector<double> means;
  for (Eigen::Index vox = 0; vox < n; ++vox) means.push_back(c.dot(post.mean_col(vox, 2, n)));
  std::nth_element(means.begin(), means.begin() + n / 2, means.end());
  const double gamma = means[static_cast<std::size_t>(n / 2)];
  const Ppm ppm = compute_ppm(post, c, gamma);

  Eigen::VectorXd hits = Eigen::VectorXd::Zero(n);
  const int draws = 100000;
  Rng rng(10003);
  Eigen::VectorXd z(system.dim());
  for (int s = 0; s < draws; ++s) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    const Eigen::VectorXd x = mu + llt.matrixL() * z;
    for (Eigen::Index vox = 0; vox < n; ++vox)
      if (c[0] * x[vox] > gamma) hits[vox] += 1.0;
  }
  hits /= draws;
  const double worst = (hits - ppm.probability).cwiseAbs().maxCoeff();
  ctx.note("max |PPM - empirical| = ", worst, " over ", n, " voxels");
  ctx.expect(worst <= 0.01, "probabilities within 0.01 of exact-draw exceedance");

  const Ppm lo = compute_ppm(post, c, gamma - 0.05);
  bool monotone = true;
  for (Eigen::Index vox = 0; vox < n; ++vox)
    monotone = monotone && ppm.probability[vox] <= lo.probability[vox] + 1e-14;
  ctx.expect(monotone, "raising gamma never raises a probability");

  const Ppm doubled = compute_ppm(post, 2.0 * c, 2.0 * gamma);
  ctx.expect((doubled.probability - ppm.probability).cwiseAbs().maxCoeff() < 1e-12,
             "(c, gamma) -> (2c, 2gamma) leaves the PPM unchanged");
}

}  // namespace acceptance
