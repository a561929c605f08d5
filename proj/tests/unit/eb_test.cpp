#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ebgmrf/eb.hpp"
#include "ebgmrf/rng.hpp"
#include "support/dense_objective.hpp"
#include "support/instances.hpp"

using namespace ebgmrf;
using testing::Instance;
using testing::make_instance;

namespace {

struct FdReport {
  double analytic;
  double fd;
};

/// Central finite differences of the independent dense log posterior in one
/// reparameterized coordinate.
double fd_objective(const Instance& inst, const NoiseState& noise,
                    const std::vector<SpatialPriorSpec>& specs, const NoisePriorSpec& np,
                    int regressor, SpatialCoordId::Kind kind, double h) {
  auto value = [&](double delta) {
    std::vector<SpatialPriorSpec> s = specs;
    auto& sp = s[static_cast<std::size_t>(regressor)];
    switch (kind) {
      case SpatialCoordId::Kind::Tau0: sp.tau2 = std::exp(std::log(sp.tau2) + delta); break;
      case SpatialCoordId::Kind::Kappa0: sp.kappa2 = std::exp(std::log(sp.kappa2) + delta); break;
      case SpatialCoordId::Kind::H0x: sp.hx = std::exp(std::log(sp.hx) + delta); break;
      case SpatialCoordId::Kind::H0y: sp.hy = std::exp(std::log(sp.hy) + delta); break;
    }
    return testing::dense_log_posterior(inst.x, inst.y, s, noise, inst.lattice, np);
  };
  return (value(h) - value(-h)) / (2.0 * h);
}

double fd_lambda(const Instance& inst, const NoiseState& noise,
                 const std::vector<SpatialPriorSpec>& specs, const NoisePriorSpec& np,
                 Eigen::Index vox, double h) {
  auto value = [&](double delta) {
    NoiseState n2 = noise;
    n2.lambda[vox] = std::exp(std::log(noise.lambda[vox]) + delta);
    return testing::dense_log_posterior(inst.x, inst.y, specs, n2, inst.lattice, np);
  };
  return (value(h) - value(-h)) / (2.0 * h);
}

double fd_a(const Instance& inst, const NoiseState& noise,
            const std::vector<SpatialPriorSpec>& specs, const NoisePriorSpec& np, int p_idx,
            Eigen::Index vox, double h) {
  auto value = [&](double delta) {
    NoiseState n2 = noise;
    n2.a(p_idx, vox) = a_from_a0(a0_from_a(noise.a(p_idx, vox)) + delta);
    return testing::dense_log_posterior(inst.x, inst.y, specs, n2, inst.lattice, np);
  };
  return (value(h) - value(-h)) / (2.0 * h);
}

void check_gradients(PriorKind kind, std::uint64_t seed, double rel_tol) {
  const int p = 1;
  Instance inst = make_instance(3, 14, p, kind, seed, 0.2, 0.5, 1.3, 0.8);
  const LaggedStats stats = precompute_lagged(inst.x, inst.y, p);
  NoisePriorSpec np;

  EbTraceOptions opts;
  opts.exact = true;
  opts.pcg_tol = 1e-12;
  const GradientReport rep = grad_log_marginal_posterior(stats, inst.specs, inst.noise,
                                                         inst.lattice, inst.graphs, np, opts);

  const double h = 2e-5;
  for (std::size_t ci = 0; ci < rep.coords.size(); ++ci) {
    const auto id = rep.coords[ci];
    const double fd = fd_objective(inst, inst.noise, inst.specs, np, id.regressor, id.kind, h);
    INFO("kind = ", prior_kind_name(kind), ", coord = ", id.name());
    CHECK(rep.grad[static_cast<Eigen::Index>(ci)] ==
          doctest::Approx(fd).epsilon(rel_tol).scale(1.0));
  }
  for (Eigen::Index vox : {0, 7, 13}) {
    const double fd = fd_lambda(inst, inst.noise, inst.specs, np, vox, h);
    INFO("kind = ", prior_kind_name(kind), ", lambda0 at voxel ", vox);
    CHECK(rep.grad_lambda0[vox] == doctest::Approx(fd).epsilon(rel_tol).scale(1.0));
    const double fda = fd_a(inst, inst.noise, inst.specs, np, 0, vox, h);
    INFO("kind = ", prior_kind_name(kind), ", a0 at voxel ", vox);
    CHECK(rep.grad_a0(0, vox) == doctest::Approx(fda).epsilon(rel_tol).scale(1.0));
  }
}

}  // namespace

TEST_CASE("reparameterization round trips and chain factors") {
  CHECK(a0_from_a(0.0) == doctest::Approx(0.0));
  CHECK(a_from_a0(0.0) == doctest::Approx(0.0));
  CHECK(a_from_a0(a0_from_a(0.9)) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(a_from_a0(a0_from_a(-0.77)) == doctest::Approx(-0.77).epsilon(1e-12));

  // Chain factor dA/dA0 by finite differences.
  const double a = 0.37, h = 1e-6;
  const double fd = (a_from_a0(a0_from_a(a) + h) - a_from_a0(a0_from_a(a) - h)) / (2.0 * h);
  CHECK(a_chain(a) == doctest::Approx(fd).epsilon(1e-8));

  // tau2 = 1 maps to tau0 = 0 with unit chain factor.
  SpatialPriorSpec spec;
  spec.kind = PriorKind::M2;
  spec.tau2 = 1.0;
  spec.kappa2 = 0.5;
  spec.hyper.variant = HyperPriorSpec::Variant::None;
  NoiseState noise;
  noise.lambda = Eigen::VectorXd::Constant(2, 1.5);
  noise.a = Eigen::MatrixXd::Zero(0, 2);
  HyperState st = state_from({spec, SpatialPriorSpec::gs()}, noise);
  CHECK(st.spatial[0].tau0 == doctest::Approx(0.0));
  std::vector<SpatialPriorSpec> specs{spec, SpatialPriorSpec::gs()};
  NoiseState noise2 = noise;
  state_to(st, specs, noise2);
  CHECK(specs[0].tau2 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((noise2.lambda - noise.lambda).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("init_noise: degenerate, white and AR(1) residuals") {
  Rng rng(61);
  const int t = 400, n = 40;
  Eigen::MatrixXd x(t, 2);
  for (int r = 0; r < t; ++r) {
    x(r, 0) = (r / 8) % 2;
    x(r, 1) = 1.0;
  }
  Eigen::MatrixXd w = testing::random_matrix(2, n, rng);

  // Noise-free data: lambda capped at the ceiling.
  Eigen::MatrixXd y0 = x * w;
  const NoiseState clean = init_noise(x, y0, 0);
  CHECK(clean.lambda.maxCoeff() == doctest::Approx(1e12));

  // White noise: A init near zero (3 SE over N voxels with T samples each).
  Eigen::MatrixXd yw = x * w;
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < t; ++r) yw(r, c) += rng.normal();
  const NoiseState white = init_noise(x, yw, 1);
  CHECK(std::abs(white.a.row(0).mean()) < 3.0 / std::sqrt(static_cast<double>(t) * n));
  CHECK(std::abs(white.lambda.mean() - 1.0) < 0.05);

  // AR(1) with a = 0.5.
  Eigen::MatrixXd ya = x * w;
  for (int c = 0; c < n; ++c) {
    double prev = 0.0;
    for (int r = 0; r < t; ++r) {
      prev = 0.5 * prev + rng.normal();
      ya(r, c) += prev;
    }
  }
  const NoiseState ar = init_noise(x, ya, 1);
  CHECK(ar.a.row(0).mean() == doctest::Approx(0.5).epsilon(0.1));

  Eigen::MatrixXd bad = x;
  bad.col(1) = 2.0 * bad.col(0);
  CHECK_THROWS_AS(init_noise(bad, yw, 0), std::invalid_argument);
}

TEST_CASE("exact-trace gradients match finite differences of the dense objective") {
  check_gradients(PriorKind::M2, 101, 2e-5);
  check_gradients(PriorKind::AM2, 102, 2e-5);
  check_gradients(PriorKind::M1, 103, 2e-5);
  check_gradients(PriorKind::ICAR1, 104, 2e-5);
  check_gradients(PriorKind::ICAR2, 105, 2e-5);
  check_gradients(PriorKind::GS, 106, 2e-5);
}

TEST_CASE("no-data limit: tau0 gradient vanishes and the Hessian equals -N/2") {
  Instance inst = make_instance(3, 12, 0, PriorKind::M2, 107);
  inst.specs[0].hyper.variant = HyperPriorSpec::Variant::None;
  const LaggedStats stats = precompute_lagged(inst.x, inst.y, 0);
  const std::vector<std::uint8_t> all_zero(static_cast<std::size_t>(inst.lattice.n), 1);
  EbTraceOptions opts;
  opts.exact = true;
  NoisePriorSpec np;
  const GradientReport rep = grad_log_marginal_posterior(stats, inst.specs, inst.noise,
                                                         inst.lattice, inst.graphs, np, opts,
                                                         &all_zero);
  REQUIRE(rep.coords.size() >= 2);
  CHECK(rep.coords[0].name() == "k0.tau0");
  CHECK(rep.grad[0] == doctest::Approx(0.0).scale(1.0));
  CHECK(rep.hess[0] == doctest::Approx(-0.5 * static_cast<double>(inst.lattice.n)).epsilon(1e-10));
}

TEST_CASE("stochastic gradient estimator is unbiased against exact traces") {
  const int p = 0;
  Instance inst = make_instance(3, 12, p, PriorKind::M2, 108);
  const LaggedStats stats = precompute_lagged(inst.x, inst.y, p);
  NoisePriorSpec np;

  EbTraceOptions exact;
  exact.exact = true;
  exact.pcg_tol = 1e-12;
  const GradientReport truth = grad_log_marginal_posterior(stats, inst.specs, inst.noise,
                                                           inst.lattice, inst.graphs, np, exact);

  const int batches = 200;
  const Eigen::Index nc = truth.grad.size();
  Eigen::MatrixXd grads(nc, batches);
  for (int b = 0; b < batches; ++b) {
    EbTraceOptions st;
    st.exact = false;
    st.n_probes = 4;
    st.seed = 7;
    st.iteration = static_cast<std::uint64_t>(b + 1);
    st.pcg_tol = 1e-10;
    const GradientReport rep = grad_log_marginal_posterior(stats, inst.specs, inst.noise,
                                                           inst.lattice, inst.graphs, np, st);
    grads.col(b) = rep.grad;
  }
  for (Eigen::Index i = 0; i < nc; ++i) {
    const double mean = grads.row(i).mean();
    const double var = (grads.row(i).array() - mean).square().sum() / (batches - 1);
    const double se = std::sqrt(var / batches);
    INFO("coordinate ", truth.coords[static_cast<std::size_t>(i)].name());
    CHECK(std::abs(mean - truth.grad[i]) < 4.0 * se + 1e-12);
  }
}

TEST_CASE("deterministic no-data surrogate: Newton steps reach the prior mode") {
  // With every likelihood block removed the objective is exactly the
  // log-normal hyperprior, a quadratic in (tau0, kappa0); exact-trace Newton
  // iterations must land on its mode.
  Instance inst = make_instance(3, 12, 0, PriorKind::M1, 109);
  inst.specs[0].hyper.variant = HyperPriorSpec::Variant::LogNormalM1;
  inst.specs[0].hyper.mu_tau0 = std::log(0.05);
  inst.specs[0].hyper.mu_kappa0 = std::log(0.3);
  inst.specs[0].hyper.sigma_tau0 = 0.4;
  inst.specs[0].hyper.sigma_kappa0 = 0.3;
  inst.specs[0].tau2 = 0.4;     // start away from the mode
  inst.specs[0].kappa2 = 1.1;

  // Null out the data by zeroing all likelihood blocks through the CV mask.
  const std::vector<std::uint8_t> all_zero(static_cast<std::size_t>(inst.lattice.n), 1);
  const LaggedStats stats = precompute_lagged(inst.x, inst.y, 0);
  NoisePriorSpec np;

  std::vector<SpatialPriorSpec> specs = inst.specs;
  double tau0 = std::log(specs[0].tau2), kappa0 = std::log(specs[0].kappa2);
  for (int it = 0; it < 60; ++it) {
    specs[0].tau2 = std::exp(tau0);
    specs[0].kappa2 = std::exp(kappa0);
    EbTraceOptions opts;
    opts.exact = true;
    const GradientReport rep = grad_log_marginal_posterior(stats, specs, inst.noise, inst.lattice,
                                                           inst.graphs, np, opts, &all_zero);
    tau0 += -rep.grad[0] / rep.hess[0];
    kappa0 += -rep.grad[1] / rep.hess[1];
  }
  CHECK(tau0 == doctest::Approx(std::log(0.05)).epsilon(1e-9));
  CHECK(kappa0 == doctest::Approx(std::log(0.3)).epsilon(1e-9));
}

TEST_CASE("run_optimizer: bitwise seed reproducibility and Polyak tail") {
  Instance inst = make_instance(3, 14, 1, PriorKind::M2, 110);
  const LaggedStats stats = precompute_lagged(inst.x, inst.y, 1);
  NoisePriorSpec np;
  OptimizerConfig cfg;
  cfg.n_iter = 6;
  cfg.warmup = 2;
  cfg.n_probes = 3;
  cfg.n_polyak = 3;
  cfg.seed = 99;
  cfg.pcg_tol = 1e-9;

  NoiseState n0 = init_noise(inst.x, inst.y, 1);
  const FitResult a = run_optimizer(stats, inst.specs, n0, inst.lattice, inst.graphs, np, cfg);
  const FitResult b = run_optimizer(stats, inst.specs, n0, inst.lattice, inst.graphs, np, cfg);
  CHECK(a.specs[0].tau2 == b.specs[0].tau2);
  CHECK(a.specs[0].kappa2 == b.specs[0].kappa2);
  CHECK((a.noise.lambda - b.noise.lambda).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.diagnostics.size() == b.diagnostics.size());
  CHECK(!a.diagnostics.empty());
}

TEST_CASE("stationarity: exact-trace optimization drives the gradient below 1e-3") {
  Instance inst = make_instance(3, 20, 0, PriorKind::M2, 111, 0.1, 0.5);
  const LaggedStats stats = precompute_lagged(inst.x, inst.y, 0);
  NoisePriorSpec np;
  OptimizerConfig cfg;
  cfg.n_iter = 250;
  cfg.warmup = 5;
  cfg.exact_traces = true;
  cfg.momentum = false;
  cfg.gamma1 = 0.0;
  cfg.gamma2 = 0.0;
  cfg.n_polyak = 1;
  cfg.seed = 3;
  cfg.pcg_tol = 1e-11;
  cfg.eta_n = 0.02;

  NoiseState n0 = init_noise(inst.x, inst.y, 0);
  const FitResult fit = run_optimizer(stats, inst.specs, n0, inst.lattice, inst.graphs, np, cfg);

  EbTraceOptions opts;
  opts.exact = true;
  opts.pcg_tol = 1e-12;
  const GradientReport rep = grad_log_marginal_posterior(stats, fit.specs, fit.noise, inst.lattice,
                                                         inst.graphs, np, opts);
  for (Eigen::Index i = 0; i < rep.grad.size(); ++i) {
    INFO("coordinate ", rep.coords[static_cast<std::size_t>(i)].name());
    CHECK(std::abs(rep.grad[i]) < 1e-3);
  }
  CHECK(rep.grad_lambda0.cwiseAbs().maxCoeff() < 0.1);
}
