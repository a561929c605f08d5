#include "ebgmrf/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ebgmrf/config.hpp"
#include "ebgmrf/eb.hpp"
#include "ebgmrf/evalsim.hpp"
#include "ebgmrf/posterior.hpp"
#include "ebgmrf/volume.hpp"

namespace fs = std::filesystem;

namespace ebgmrf {

namespace {

std::string resolve(const std::string& base, const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base) / p).string();
}

std::string existing_file(const ConfigFile& cfg, const std::string& base, const std::string& key) {
  const std::string p = resolve(base, cfg.get_string(key));
  if (!fs::exists(p)) throw ConfigError(key, "file does not exist: " + p);
  return p;
}

struct Loaded {
  MaskedLattice lattice;
  GraphSet graphs;
  Dataset dataset;
  int noise_order = 0;
};

Eigen::MatrixXd boxcar_design(int t) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(t, 2);
  double s = 0.0;
  for (int r = 0; r < t; ++r) {
    const double box = (r / 12) % 2 == 0 ? 1.0 : 0.0;
    s = 0.7 * s + 0.3 * box;
    x(r, 0) = s;
    x(r, 1) = 1.0;
  }
  return x;
}

MaskedLattice lattice_from_sim_block(const ConfigFile& cfg, const std::string& base) {
  const auto dims_i = cfg.get_ints("simulate.dims");
  if (dims_i.size() != 3) throw ConfigError("simulate.dims", "expected three integers");
  const std::array<int, 3> dims{static_cast<int>(dims_i[0]), static_cast<int>(dims_i[1]),
                                static_cast<int>(dims_i[2])};
  std::array<double, 3> vs{3.0, 3.0, 3.0};
  if (cfg.has("simulate.voxel_size")) {
    const auto v = cfg.get_doubles("simulate.voxel_size");
    if (v.size() != 3) throw ConfigError("simulate.voxel_size", "expected three numbers");
    vs = {v[0], v[1], v[2]};
  }
  const std::string shape = cfg.get_string("simulate.mask", "ellipsoid");
  std::vector<std::uint8_t> mask;
  if (shape == "ellipsoid")
    mask = ellipsoid_mask(dims);
  else if (shape == "full")
    mask = full_mask(dims);
  else {
    const Volume mv = read_volume(resolve(base, shape));
    if (mv.dims != dims) throw ConfigError("simulate.mask", "mask volume dims differ from simulate.dims");
    mask = mask_from_volume(mv);
  }
  return build_lattice(dims, mask, vs);
}

Loaded load_dataset(const ConfigFile& cfg, const std::string& base) {
  Loaded out;
  const Volume mask_vol = read_volume(existing_file(cfg, base, "data.mask"));
  out.lattice = build_lattice(mask_vol.dims, mask_from_volume(mask_vol), mask_vol.voxel_size);
  out.graphs = build_graph_set(out.lattice);

  const Volume bold = read_volume(existing_file(cfg, base, "data.bold"));
  if (bold.dims != out.lattice.dims) throw ConfigError("data.bold", "bold dims differ from mask dims");
  out.dataset.y = series_from_volume(bold, out.lattice);
  out.dataset.x = read_design(existing_file(cfg, base, "data.design"));
  if (out.dataset.x.rows() != out.dataset.y.rows())
    throw ConfigError("data.design", "design rows differ from bold time dimension");
  out.dataset.voxel_size = out.lattice.voxel_size;
  out.dataset.compute_global_mean();

  out.noise_order = static_cast<int>(cfg.get_int("model.noise_order", 0));
  if (out.noise_order < 0 || out.noise_order >= out.dataset.t())
    throw ConfigError("model.noise_order", "needs 0 <= P < T");

  std::vector<int> activity;
  for (long long c : cfg.get_ints("model.activity")) {
    if (c < 1 || c > out.dataset.k()) throw ConfigError("model.activity", "column index out of 1..K");
    activity.push_back(static_cast<int>(c - 1));
  }
  out.dataset.activity_set = activity;
  for (int c = 0; c < out.dataset.k(); ++c)
    if (std::find(activity.begin(), activity.end(), c) == activity.end())
      out.dataset.nuisance_set.push_back(c);
  out.dataset.validate(out.noise_order);
  return out;
}

HyperPriorSpec::Variant default_variant(PriorKind kind) {
  switch (kind) {
    case PriorKind::M2:
    case PriorKind::AM2: return HyperPriorSpec::Variant::PcMatern;
    case PriorKind::M1: return HyperPriorSpec::Variant::LogNormalM1;
    case PriorKind::ICAR1:
    case PriorKind::ICAR2: return HyperPriorSpec::Variant::PcIcar;
    case PriorKind::GS: return HyperPriorSpec::Variant::None;
  }
  return HyperPriorSpec::Variant::None;
}

double default_variance_constant(PriorKind kind) {
  switch (kind) {
    case PriorKind::ICAR1: return 1.0 / 6.0;
    case PriorKind::ICAR2: return 1.0 / 42.0;
    default: return 1.0;
  }
}

SpatialPriorSpec prior_from_config(const ConfigFile& cfg, const std::string& section,
                                   double global_mean) {
  SpatialPriorSpec spec;
  spec.kind = prior_kind_from_name(cfg.get_string(section + ".kind", "M2"));
  const std::string hp = cfg.get_string(section + ".hyperprior", "");
  if (hp.empty())
    spec.hyper.variant = default_variant(spec.kind);
  else if (hp == "pc")
    spec.hyper.variant = spec.kind == PriorKind::M2 || spec.kind == PriorKind::AM2
                             ? HyperPriorSpec::Variant::PcMatern
                             : HyperPriorSpec::Variant::PcIcar;
  else if (hp == "lognormal")
    spec.hyper.variant = HyperPriorSpec::Variant::LogNormalM1;
  else if (hp == "gamma")
    spec.hyper.variant = HyperPriorSpec::Variant::GammaTau2;
  else if (hp == "none")
    spec.hyper.variant = HyperPriorSpec::Variant::None;
  else
    throw ConfigError(section + ".hyperprior", "unknown variant '" + hp + "'");

  spec.hyper.xi1 = cfg.get_double(section + ".xi1", 0.05);
  spec.hyper.xi2 = cfg.get_double(section + ".xi2", 0.05);
  spec.hyper.rho0 = cfg.get_double(section + ".rho0_voxels", 2.0);
  if (cfg.has(section + ".sigma0"))
    spec.hyper.sigma0 = cfg.get_double(section + ".sigma0");
  else
    spec.hyper.sigma0 = cfg.get_double(section + ".sigma0_pct", 2.0) / 100.0 * global_mean;
  spec.hyper.variance_constant =
      cfg.get_double(section + ".variance_constant", default_variance_constant(spec.kind));
  spec.hyper.mu_tau0 = cfg.get_double(section + ".mu_tau0", std::log(0.01));
  spec.hyper.mu_kappa0 = cfg.get_double(section + ".mu_kappa0", std::log(0.1));
  spec.hyper.sigma_tau0 = cfg.get_double(section + ".sigma_tau0", 4.0);
  spec.hyper.sigma_kappa0 = cfg.get_double(section + ".sigma_kappa0", 1.0);
  spec.hyper.q1 = cfg.get_double(section + ".q1", 10.0);
  spec.hyper.q2 = cfg.get_double(section + ".q2", 0.1);
  spec.hyper.sigma_h2 = cfg.get_double(section + ".sigma_h2", 0.01);

  init_spatial_from_hyperprior(spec);
  if (spec.kind == PriorKind::GS) spec.tau2 = 1e-12;
  spec.tau2 = cfg.get_double(section + ".init_tau2", spec.tau2);
  if (spec.has_kappa()) spec.kappa2 = cfg.get_double(section + ".init_kappa2", spec.kappa2);
  spec.hx = cfg.get_double(section + ".init_hx", 1.0);
  spec.hy = cfg.get_double(section + ".init_hy", 1.0);

  const bool opt_all = cfg.get_bool(section + ".optimize", spec.kind != PriorKind::GS);
  spec.optimize_tau2 = cfg.get_bool(section + ".optimize_tau2", opt_all);
  spec.optimize_kappa2 = cfg.get_bool(section + ".optimize_kappa2", opt_all && spec.has_kappa());
  spec.optimize_h = cfg.get_bool(section + ".optimize_h", opt_all && spec.anisotropic());
  spec.validate();
  return spec;
}

std::vector<SpatialPriorSpec> build_specs(const ConfigFile& cfg, const Dataset& dataset) {
  std::vector<SpatialPriorSpec> specs(static_cast<std::size_t>(dataset.k()),
                                      SpatialPriorSpec::gs(1e-12));
  for (int c : dataset.activity_set) {
    const std::string section = "prior." + std::to_string(c + 1);
    if (!cfg.has(section + ".kind"))
      throw ConfigError(section + ".kind", "missing prior block for activity column");
    specs[static_cast<std::size_t>(c)] = prior_from_config(cfg, section, dataset.global_mean_signal);
  }
  return specs;
}

OptimizerConfig optimizer_from(const ConfigFile& cfg, std::uint64_t seed) {
  OptimizerConfig oc;
  oc.n_iter = static_cast<int>(cfg.get_int("optimizer.n_iter", 200));
  oc.gamma1 = cfg.get_double("optimizer.gamma1", 0.2);
  oc.gamma2 = cfg.get_double("optimizer.gamma2", 0.9);
  oc.eta_mom = cfg.get_double("optimizer.eta_mom", 0.5);
  oc.eta_n = cfg.get_double("optimizer.eta_n", 1e-3);
  oc.n_polyak = static_cast<int>(cfg.get_int("optimizer.n_polyak", 10));
  oc.n_probes = static_cast<int>(cfg.get_int("optimizer.n_probes", 50));
  oc.warmup = static_cast<int>(cfg.get_int("optimizer.warmup", 5));
  oc.pcg_tol = cfg.get_double("optimizer.pcg_tol", 1e-8);
  oc.pcg_max_iter = static_cast<int>(cfg.get_int("optimizer.pcg_max_iter", 2000));
  oc.exact_traces = cfg.get_bool("optimizer.exact_traces", false);
  oc.decay_start = static_cast<int>(cfg.get_int("optimizer.decay_start", 100));
  oc.seed = seed;
  return oc;
}

NoisePriorSpec noise_prior_from(const ConfigFile& cfg) {
  NoisePriorSpec np;
  np.u1 = cfg.get_double("noise.u1", 10.0);
  np.u2 = cfg.get_double("noise.u2", 0.1);
  np.tau_a2 = cfg.get_double("noise.tau_a2", 1e-3);
  return np;
}

void write_theta(const std::string& path, const std::vector<SpatialPriorSpec>& specs,
                 const Dataset& dataset, int noise_order, std::uint64_t seed) {
  ConfigFile out;
  out.set_int("fit.k", dataset.k());
  out.set_int("fit.noise_order", noise_order);
  out.set_int("fit.seed", static_cast<long long>(seed));
  out.set_double("fit.global_mean_signal", dataset.global_mean_signal);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const std::string sec = "regressor." + std::to_string(k + 1);
    const auto& s = specs[k];
    out.set_string(sec + ".kind", prior_kind_name(s.kind));
    out.set_double(sec + ".tau2", s.tau2);
    out.set_double(sec + ".kappa2", s.kappa2);
    out.set_double(sec + ".hx", s.hx);
    out.set_double(sec + ".hy", s.hy);
    if (s.nu() > 0.0 && s.kappa2 > 0.0) {
      const SigmaRho sr = sigma_rho(s.tau2, s.kappa2, s.alpha());
      out.set_double(sec + ".sigma", std::sqrt(sr.sigma2));
      out.set_double(sec + ".rho_mm", sr.rho * dataset.voxel_size[0]);
    }
  }
  out.save(path);
}

void read_theta(const std::string& path, std::vector<SpatialPriorSpec>& specs) {
  const ConfigFile in = ConfigFile::load(path);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const std::string sec = "regressor." + std::to_string(k + 1);
    if (!in.has(sec + ".kind")) throw ConfigError(sec + ".kind", "missing in fitted state");
    const PriorKind kind = prior_kind_from_name(in.get_string(sec + ".kind"));
    if (kind != specs[k].kind) throw ConfigError(sec + ".kind", "fitted kind differs from config");
    specs[k].tau2 = in.get_double(sec + ".tau2");
    specs[k].kappa2 = in.get_double(sec + ".kappa2");
    specs[k].hx = in.get_double(sec + ".hx");
    specs[k].hy = in.get_double(sec + ".hy");
  }
}

NoiseState read_noise(const std::string& fit_dir, const MaskedLattice& lattice, int p) {
  NoiseState noise;
  const Volume lam = read_volume((fs::path(fit_dir) / "lambda.nii").string());
  Eigen::MatrixXd lam_row = series_from_volume(lam, lattice);
  noise.lambda = lam_row.row(0).transpose();
  noise.a.resize(p, lattice.n);
  for (int q = 0; q < p; ++q) {
    const Volume av =
        read_volume((fs::path(fit_dir) / ("ar" + std::to_string(q + 1) + ".nii")).string());
    noise.a.row(q) = series_from_volume(av, lattice).row(0);
  }
  return noise;
}

Eigen::VectorXd expand_contrast(const ConfigFile& cfg, const Dataset& dataset) {
  const auto c = cfg.get_doubles("ppm.contrast");
  Eigen::VectorXd contrast = Eigen::VectorXd::Zero(dataset.k());
  if (static_cast<Eigen::Index>(c.size()) == dataset.k()) {
    for (std::size_t i = 0; i < c.size(); ++i) contrast[static_cast<Eigen::Index>(i)] = c[i];
  } else if (c.size() == dataset.activity_set.size()) {
    for (std::size_t i = 0; i < c.size(); ++i) contrast[dataset.activity_set[i]] = c[i];
  } else {
    throw ConfigError("ppm.contrast", "length must be K or the number of activity columns");
  }
  return contrast;
}

void write_diagnostics(const std::string& path, const std::vector<DiagnosticsRow>& rows) {
  std::ofstream out(path);
  out << "iteration,coordinate,value,gradient,step\n";
  out.precision(12);
  for (const auto& r : rows)
    out << r.iteration << ',' << r.coordinate << ',' << r.value << ',' << r.gradient << ','
        << r.step << '\n';
}

int cmd_simulate(const ConfigFile& cfg, const std::string& base, std::uint64_t seed,
                 const std::string& out_dir) {
  const MaskedLattice lattice = lattice_from_sim_block(cfg, base);
  const GraphSet graphs = build_graph_set(lattice);

  SimulationSpec sim;
  sim.seed = seed;
  const int t = static_cast<int>(cfg.get_int("simulate.t", 100));
  const std::string design_src = cfg.get_string("simulate.design", "boxcar");
  sim.design = design_src == "boxcar" ? boxcar_design(t) : read_design(resolve(base, design_src));
  if (cfg.has("simulate.ar"))
    sim.ar_coef = Eigen::Map<const Eigen::VectorXd>(cfg.get_doubles("simulate.ar").data(),
                                                    static_cast<Eigen::Index>(cfg.get_doubles("simulate.ar").size()));
  else
    sim.ar_coef.resize(0);
  sim.lambda = cfg.get_double("simulate.lambda", 1.0);
  sim.noise_enabled = cfg.get_bool("simulate.noise", true);
  sim.intercept_level = cfg.get_double("simulate.intercept", 100.0);

  const auto names = cfg.subsections("condition");
  if (names.empty()) throw ConfigError("condition.1.kind", "at least one [condition.*] block required");
  std::vector<int> activity;
  if (cfg.has("model.activity"))
    for (long long c : cfg.get_ints("model.activity")) activity.push_back(static_cast<int>(c - 1));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string sec = "condition." + names[i];
    SpatialPriorSpec spec;
    spec.kind = prior_kind_from_name(cfg.get_string(sec + ".kind", "AM2"));
    spec.hyper.variant = HyperPriorSpec::Variant::None;
    spec.hx = cfg.get_double(sec + ".hx", 1.0);
    spec.hy = cfg.get_double(sec + ".hy", 1.0);
    if (cfg.has(sec + ".rho_mm") || cfg.has(sec + ".sigma")) {
      const double rho_mm = cfg.get_double(sec + ".rho_mm");
      const double sigma = cfg.get_double(sec + ".sigma");
      const double rho_vox = rho_mm / lattice.voxel_size[0];
      const double nu = spec.nu();
      if (!(nu > 0.0)) throw ConfigError(sec + ".rho_mm", "rho/sigma parameterization needs alpha=2");
      const double kappa = std::sqrt(8.0 * nu) / rho_vox;
      spec.kappa2 = kappa * kappa;
      spec.tau2 = tau2_for_sigma(sigma, spec.kappa2, spec.alpha());
    } else {
      spec.tau2 = cfg.get_double(sec + ".tau2");
      spec.kappa2 = cfg.get_double(sec + ".kappa2", 0.0);
    }
    spec.validate();
    sim.conditions.push_back(spec);
    sim.activity_columns.push_back(
        activity.size() > i ? activity[i] : static_cast<int>(i));
  }

  const SimulatedData data = simulate_dataset(sim, lattice, graphs);

  fs::create_directories(out_dir);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(lattice.n);
  write_volume((fs::path(out_dir) / "mask.nii").string(), volume_from_field(lattice, ones));
  write_volume((fs::path(out_dir) / "bold.nii").string(),
               volume_from_series(lattice, data.dataset.y));
  for (std::size_t i = 0; i < sim.conditions.size(); ++i) {
    const int col = sim.activity_columns[i];
    write_volume((fs::path(out_dir) / ("truth_" + std::to_string(col + 1) + ".nii")).string(),
                 volume_from_field(lattice, data.w_true.row(col).transpose()));
  }
  if (design_src == "boxcar") {
    std::ofstream d((fs::path(out_dir) / "design.csv").string());
    for (Eigen::Index r = 0; r < sim.design.rows(); ++r) {
      for (Eigen::Index c = 0; c < sim.design.cols(); ++c)
        d << (c ? "," : "") << sim.design(r, c);
      d << '\n';
    }
  }
  ConfigFile truth;
  truth.set_int("simulate.seed", static_cast<long long>(seed));
  for (std::size_t i = 0; i < sim.conditions.size(); ++i) {
    const std::string sec = "truth." + std::to_string(sim.activity_columns[i] + 1);
    truth.set_string(sec + ".kind", prior_kind_name(sim.conditions[i].kind));
    truth.set_double(sec + ".tau2", sim.conditions[i].tau2);
    truth.set_double(sec + ".kappa2", sim.conditions[i].kappa2);
    truth.set_double(sec + ".hx", sim.conditions[i].hx);
    truth.set_double(sec + ".hy", sim.conditions[i].hy);
  }
  truth.save((fs::path(out_dir) / "truth.toml").string());
  return 0;
}

int cmd_fit(const ConfigFile& cfg, const std::string& base, std::uint64_t seed) {
  Loaded run = load_dataset(cfg, base);
  const std::string out_dir = resolve(base, cfg.get_string("data.output", "out"));
  fs::create_directories(out_dir);

  std::vector<SpatialPriorSpec> specs = build_specs(cfg, run.dataset);
  const LaggedStats stats = precompute_lagged(run.dataset.x, run.dataset.y, run.noise_order);
  NoiseState noise = init_noise(run.dataset.x, run.dataset.y, run.noise_order);
  const OptimizerConfig oc = optimizer_from(cfg, seed);
  const NoisePriorSpec np = noise_prior_from(cfg);

  FitResult fit = run_optimizer(stats, std::move(specs), std::move(noise), run.lattice, run.graphs,
                                np, oc);

  write_theta((fs::path(out_dir) / "theta.toml").string(), fit.specs, run.dataset, run.noise_order,
              seed);
  write_volume((fs::path(out_dir) / "lambda.nii").string(),
               volume_from_field(run.lattice, fit.noise.lambda));
  for (int q = 0; q < run.noise_order; ++q)
    write_volume((fs::path(out_dir) / ("ar" + std::to_string(q + 1) + ".nii")).string(),
                 volume_from_field(run.lattice, fit.noise.a.row(q).transpose()));
  write_diagnostics((fs::path(out_dir) / "diagnostics.csv").string(), fit.diagnostics);

  // Posterior mean at the fitted hyperparameters.
  std::vector<PrecisionOperator> ops;
  for (const auto& s : fit.specs) ops.emplace_back(s, run.lattice, run.graphs);
  PosteriorSystem system(std::move(ops), build_likelihood_blocks(stats, fit.noise));
  const Eigen::VectorXd mu = posterior_mean(system, oc.pcg_tol, oc.pcg_max_iter);
  for (Eigen::Index k = 0; k < run.dataset.k(); ++k)
    write_volume((fs::path(out_dir) / ("mu_k" + std::to_string(k + 1) + ".nii")).string(),
                 volume_from_field(run.lattice, mu.segment(k * run.lattice.n, run.lattice.n)));
  return 0;
}

int cmd_ppm(const ConfigFile& cfg, const std::string& base, std::uint64_t seed,
            const std::string& fit_dir) {
  Loaded run = load_dataset(cfg, base);
  std::vector<SpatialPriorSpec> specs = build_specs(cfg, run.dataset);
  read_theta((fs::path(fit_dir) / "theta.toml").string(), specs);
  const NoiseState noise = read_noise(fit_dir, run.lattice, run.noise_order);
  const LaggedStats stats = precompute_lagged(run.dataset.x, run.dataset.y, run.noise_order);

  std::vector<PrecisionOperator> ops;
  for (const auto& s : specs) ops.emplace_back(s, run.lattice, run.graphs);
  PosteriorSystem system(std::move(ops), build_likelihood_blocks(stats, noise));

  const int n_rbmc = static_cast<int>(cfg.get_int("ppm.n_rbmc", 100));
  const double pcg_tol = cfg.get_double("optimizer.pcg_tol", 1e-8);
  const PosteriorGmrf post = compute_posterior(system, n_rbmc, seed, pcg_tol);

  const Eigen::VectorXd contrast = expand_contrast(cfg, run.dataset);
  const double gamma =
      cfg.get_double("ppm.gamma_pct", 0.5) / 100.0 * run.dataset.global_mean_signal;
  const double display = cfg.get_double("ppm.display_threshold", 0.9);
  const Ppm ppm = compute_ppm(post, contrast, gamma, display);

  const std::string out_dir = resolve(base, cfg.get_string("data.output", "out"));
  fs::create_directories(out_dir);
  write_volume((fs::path(out_dir) / "ppm.nii").string(),
               volume_from_field(run.lattice, ppm.probability));
  Eigen::VectorXd displayed =
      (ppm.probability.array() >= display).select(ppm.probability, Eigen::VectorXd::Zero(run.lattice.n));
  write_volume((fs::path(out_dir) / "ppm_display.nii").string(),
               volume_from_field(run.lattice, displayed));
  Eigen::VectorXd cmean(run.lattice.n);
  for (Eigen::Index vox = 0; vox < run.lattice.n; ++vox)
    cmean[vox] = contrast.dot(post.mean_col(vox, run.dataset.k(), run.lattice.n));
  write_volume((fs::path(out_dir) / "contrast_mean.nii").string(),
               volume_from_field(run.lattice, cmean));
  return 0;
}

int cmd_sample_prior(const ConfigFile& cfg, const std::string& base, std::uint64_t seed,
                     int n_samples) {
  MaskedLattice lattice;
  if (cfg.has("data.mask")) {
    const Volume mask_vol = read_volume(existing_file(cfg, base, "data.mask"));
    lattice = build_lattice(mask_vol.dims, mask_from_volume(mask_vol), mask_vol.voxel_size);
  } else {
    lattice = lattice_from_sim_block(cfg, base);
  }
  const GraphSet graphs = build_graph_set(lattice);
  const std::string out_dir = resolve(base, cfg.get_string("data.output", "out"));
  fs::create_directories(out_dir);

  const auto sections = cfg.subsections("prior");
  if (sections.empty()) throw ConfigError("prior", "no [prior.*] blocks to sample");
  for (const auto& name : sections) {
    const std::string sec = "prior." + name;
    SpatialPriorSpec spec;
    spec.kind = prior_kind_from_name(cfg.get_string(sec + ".kind", "M2"));
    spec.hyper.variant = HyperPriorSpec::Variant::None;
    spec.tau2 = cfg.get_double(sec + ".init_tau2", 1.0);
    spec.kappa2 = cfg.get_double(sec + ".init_kappa2", spec.has_kappa() ? 0.1 : 0.0);
    spec.hx = cfg.get_double(sec + ".init_hx", 1.0);
    spec.hy = cfg.get_double(sec + ".init_hy", 1.0);
    spec.validate();
    for (int s = 0; s < n_samples; ++s) {
      Rng rng = Rng(seed).child(0x7370726939ull, std::hash<std::string>{}(name), static_cast<std::uint64_t>(s));
      const Eigen::VectorXd field = sample_prior(spec, lattice, graphs, rng);
      write_volume((fs::path(out_dir) /
                    ("prior_" + prior_kind_name(spec.kind) + "_" + name + "_s" + std::to_string(s) + ".nii"))
                       .string(),
                   volume_from_field(lattice, field));
    }
  }
  return 0;
}

int cmd_cv(const ConfigFile& cfg, const std::string& base, std::uint64_t seed,
           const std::string& fit_dir) {
  Loaded run = load_dataset(cfg, base);
  std::vector<SpatialPriorSpec> specs = build_specs(cfg, run.dataset);
  read_theta((fs::path(fit_dir) / "theta.toml").string(), specs);
  const NoiseState noise = read_noise(fit_dir, run.lattice, run.noise_order);
  const LaggedStats stats = precompute_lagged(run.dataset.x, run.dataset.y, run.noise_order);

  CvPlan plan;
  plan.leave_out_pct = cfg.get_double("cv.leave_out_pct", 90.0);
  plan.n_splits = static_cast<int>(cfg.get_int("cv.n_splits", 50));
  plan.u = cfg.get_double("cv.u", 0.05);
  plan.n_rbmc = static_cast<int>(cfg.get_int("cv.n_rbmc", 100));
  plan.pcg_tol = cfg.get_double("optimizer.pcg_tol", 1e-8);
  plan.seed = seed;

  const std::vector<ScoreReport> reports =
      run_cv(run.dataset, stats, noise, specs, run.lattice, run.graphs, plan);

  const std::string out_dir = resolve(base, cfg.get_string("data.output", "out"));
  fs::create_directories(out_dir);
  std::ofstream out((fs::path(out_dir) / "scores.csv").string());
  out << "split,mae,rmse,crps,ign,int\n";
  out.precision(12);
  for (std::size_t s = 0; s < reports.size(); ++s)
    out << s << ',' << reports[s].mae << ',' << reports[s].rmse << ',' << reports[s].crps << ','
        << reports[s].ign << ',' << reports[s].interval << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Empirical-Bayes lattice regression with Matern GMRF spatial priors"};
  app.require_subcommand(1);

  std::string config_path, fit_dir, out_override;
  long long seed_override = -1;
  int n_samples = 1;

  auto add_common = [&](CLI::App* sub, bool needs_fit) {
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--seed", seed_override, "override the config seed");
    if (needs_fit) sub->add_option("--fit", fit_dir, "directory written by `fit`")->required();
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset with known truth");
  add_common(sim, false);
  sim->add_option("--out", out_override, "output directory (default: config data.output)");
  CLI::App* fit = app.add_subcommand("fit", "empirical-Bayes hyperparameter optimization");
  add_common(fit, false);
  CLI::App* ppm = app.add_subcommand("ppm", "posterior probability maps at the fitted state");
  add_common(ppm, true);
  CLI::App* spr = app.add_subcommand("sample-prior", "draw random fields from configured priors");
  add_common(spr, false);
  spr->add_option("--n", n_samples, "samples per prior");
  CLI::App* cv = app.add_subcommand("cv", "cross-validated predictive scores at the fitted state");
  add_common(cv, true);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const ConfigFile cfg = ConfigFile::load(config_path);
    const std::string base = fs::path(config_path).parent_path().string();
    const std::uint64_t seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override)
                                                  : static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    if (sim->parsed()) {
      const std::string out_dir =
          out_override.empty() ? resolve(base, cfg.get_string("data.output", "out")) : out_override;
      return cmd_simulate(cfg, base, seed, out_dir);
    }
    if (fit->parsed()) return cmd_fit(cfg, base, seed);
    if (ppm->parsed()) return cmd_ppm(cfg, base, seed, fit_dir);
    if (spr->parsed()) return cmd_sample_prior(cfg, base, seed, n_samples);
    if (cv->parsed()) return cmd_cv(cfg, base, seed, fit_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace ebgmrf
