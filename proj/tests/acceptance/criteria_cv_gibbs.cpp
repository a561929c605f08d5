#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>

#include "ebgmrf/eb.hpp"
#include "ebgmrf/evalsim.hpp"
#include "ebgmrf/posterior.hpp"
#include "ebgmrf/rng.hpp"
#include "harness.hpp"
#include "helpers.hpp"

using namespace ebgmrf;

namespace acceptance {

ACCEPTANCE_CRITERION(12, "cross-validation: M2 beats GS on RMSE and CRPS in >= 9 of 10 splits") {
  const auto t0 = std::chrono::steady_clock::now();
  World w = cube_world(12, 3.0);

  // Smooth M2 truth, moderate noise.
  SimulationSpec sim;
  SpatialPriorSpec truth;
  truth.kind = PriorKind::M2;
  truth.kappa2 = 0.25;  // rho = 4 voxels
  truth.tau2 = tau2_for_sigma(2.0, truth.kappa2, 2.0);
  truth.hyper.variant = HyperPriorSpec::Variant::None;
  sim.conditions = {truth};
  sim.activity_columns = {0};
  sim.design = task_design(60);
  Eigen::VectorXd ar(1);
  ar << 0.3;
  sim.ar_coef = ar;
  sim.lambda = 1.0;
  sim.seed = 12001;
  const SimulatedData data = simulate_dataset(sim, w.lattice, w.graphs);
  const LaggedStats stats = precompute_lagged(data.dataset.x, data.dataset.y, 1);
  const NoiseState noise0 = init_noise(data.dataset.x, data.dataset.y, 1);

  OptimizerConfig cfg;
  cfg.n_iter = 150;
  cfg.seed = 12002;

  // M2 model.
  std::vector<SpatialPriorSpec> m2_specs{
      pc_matern_spec(PriorKind::M2, 0.02 * data.dataset.global_mean_signal),
      SpatialPriorSpec::gs(1e-12)};
  const FitResult m2_fit =
      run_optimizer(stats, m2_specs, noise0, w.lattice, w.graphs, NoisePriorSpec{}, cfg);

  // GS model on the activity regressor, shrinkage scale optimized.
  SpatialPriorSpec gs_act;
  gs_act.kind = PriorKind::GS;
  gs_act.tau2 = 0.25;
  gs_act.optimize_tau2 = true;
  gs_act.hyper.variant = HyperPriorSpec::Variant::PcIcar;
  gs_act.hyper.sigma0 = 0.02 * data.dataset.global_mean_signal;
  gs_act.hyper.variance_constant = 1.0;
  std::vector<SpatialPriorSpec> gs_specs{gs_act, SpatialPriorSpec::gs(1e-12)};
  const FitResult gs_fit =
      run_optimizer(stats, gs_specs, noise0, w.lattice, w.graphs, NoisePriorSpec{}, cfg);

  CvPlan plan;
  plan.leave_out_pct = 90.0;
  plan.n_splits = 10;
  plan.n_rbmc = 60;
  plan.seed = 12003;
  const auto m2_scores =
      run_cv(data.dataset, stats, m2_fit.noise, m2_fit.specs, w.lattice, w.graphs, plan);
  const auto gs_scores =
      run_cv(data.dataset, stats, gs_fit.noise, gs_fit.specs, w.lattice, w.graphs, plan);

  int rmse_wins = 0, crps_wins = 0;
  for (int s = 0; s < plan.n_splits; ++s) {
    if (m2_scores[static_cast<std::size_t>(s)].rmse < gs_scores[static_cast<std::size_t>(s)].rmse)
      ++rmse_wins;
    if (m2_scores[static_cast<std::size_t>(s)].crps < gs_scores[static_cast<std::size_t>(s)].crps)
      ++crps_wins;
  }
  ctx.note("M2 rho_hat = ",
           sigma_rho(m2_fit.specs[0].tau2, m2_fit.specs[0].kappa2, 2.0).rho * 3.0, " mm");
  ctx.note("mean RMSE: M2 ",
           std::accumulate(m2_scores.begin(), m2_scores.end(), 0.0,
                           [](double a, const ScoreReport& r) { return a + r.rmse; }) / 10.0,
           " vs GS ",
           std::accumulate(gs_scores.begin(), gs_scores.end(), 0.0,
                           [](double a, const ScoreReport& r) { return a + r.rmse; }) / 10.0);
  ctx.note("RMSE wins ", rmse_wins, "/10, CRPS wins ", crps_wins, "/10");
  ctx.expect(rmse_wins >= 9, "M2 lower RMSE in >= 9 of 10 splits");
  ctx.expect(crps_wins >= 9, "M2 lower CRPS in >= 9 of 10 splits");

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ctx.note("runtime ", secs, " s");
  ctx.expect(secs < 1200.0, "runtime < 20 min");
}

ACCEPTANCE_CRITERION(13, "EB posterior agrees with the conjugate Gibbs oracle (ICAR1 + gamma prior)") {
  World w = cube_world(5, 3.0);
  const Eigen::Index n = w.lattice.n;

  // ICAR1-smooth truth, white noise, P = 0.
  SpatialPriorSpec truth;
  truth.kind = PriorKind::ICAR1;
  truth.tau2 = 0.5;
  truth.hyper.variant = HyperPriorSpec::Variant::None;
  SimulationSpec sim;
  sim.conditions = {truth};
  sim.activity_columns = {0};
  sim.design = task_design(40);
  sim.ar_coef.resize(0);
  sim.lambda = 1.0;
  sim.seed = 13001;
  const SimulatedData data = simulate_dataset(sim, w.lattice, w.graphs);
  const LaggedStats stats = precompute_lagged(data.dataset.x, data.dataset.y, 0);

  SpatialPriorSpec icar;
  icar.kind = PriorKind::ICAR1;
  icar.tau2 = 1.0;
  icar.optimize_tau2 = true;
  icar.hyper.variant = HyperPriorSpec::Variant::GammaTau2;
  icar.hyper.q1 = 10.0;
  icar.hyper.q2 = 0.1;
  std::vector<SpatialPriorSpec> specs{icar, SpatialPriorSpec::gs(1e-12)};

  NoisePriorSpec np;
  OptimizerConfig cfg;
  cfg.n_iter = 400;
  cfg.exact_traces = true;
  cfg.eta_n = 0.02;
  cfg.seed = 13002;
  NoiseState noise0 = init_noise(data.dataset.x, data.dataset.y, 0);
  const FitResult fit = run_optimizer(stats, specs, noise0, w.lattice, w.graphs, np, cfg);

  std::vector<PrecisionOperator> ops;
  for (const auto& s : fit.specs) ops.emplace_back(s, w.lattice, w.graphs);
  PosteriorSystem system(std::move(ops), build_likelihood_blocks(stats, fit.noise));
  const Eigen::VectorXd beta_eb = posterior_mean(system, 1e-10);

  GibbsConfig gc;
  gc.iterations = 6000;
  gc.burnin = 1000;
  gc.seed = 13003;
  const GibbsResult gibbs =
      gibbs_oracle(data.dataset, stats, icar, 0, fit.specs, w.lattice, w.graphs, np, gc);

  double worst = 0.0;
  for (Eigen::Index i = 0; i < 2 * n; ++i)
    worst = std::max(worst, std::abs(beta_eb[i] - gibbs.beta_mean[i]) / gibbs.beta_sd[i]);
  ctx.note("tau2_EB = ", fit.specs[0].tau2, ", Gibbs tau2 mean = ", gibbs.tau2_mean);
  ctx.note("max |beta_EB - beta_Gibbs| / posterior sd = ", worst);
  ctx.expect(worst <= 0.05, "posterior means differ by <= 0.05 posterior sd per voxel");

  std::vector<double> chain = gibbs.tau2_chain;
  std::sort(chain.begin(), chain.end());
  const double lo = chain[static_cast<std::size_t>(0.025 * chain.size())];
  const double hi = chain[static_cast<std::size_t>(0.975 * chain.size())];
  ctx.note("Gibbs 95% interval for tau2: [", lo, ", ", hi, "]");
  ctx.expect(fit.specs[0].tau2 >= lo && fit.specs[0].tau2 <= hi,
             "EB tau2 lies inside the Gibbs central 95% interval");
}

}  // namespace acceptance
