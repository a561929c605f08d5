#include "ebgmrf/evalsim.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ebgmrf/dense_oracle.hpp"
#include "ebgmrf/posterior.hpp"
#include "ebgmrf/stats.hpp"

namespace ebgmrf {

SimulatedData simulate_dataset(const SimulationSpec& spec, const MaskedLattice& lattice,
                               const GraphSet& graphs) {
  const Eigen::Index t = spec.design.rows(), k = spec.design.cols(), n = lattice.n;
  if (spec.conditions.size() != spec.activity_columns.size())
    throw std::invalid_argument("simulate_dataset: one activity column per condition required");
  const int p = static_cast<int>(spec.ar_coef.size());
  if (t <= p) throw std::invalid_argument("simulate_dataset: needs T > P");

  SimulatedData out;
  out.w_true = Eigen::MatrixXd::Zero(k, n);
  Rng root(spec.seed);
  for (std::size_t c = 0; c < spec.conditions.size(); ++c) {
    Rng rng = root.child(0x62657461ull, static_cast<std::uint64_t>(c));
    out.w_true.row(spec.activity_columns[c]) =
        sample_prior(spec.conditions[c], lattice, graphs, rng).transpose();
  }
  const Eigen::Index icol = spec.intercept_column < 0 ? k - 1 : spec.intercept_column;
  if (spec.intercept_field)
    out.w_true.row(icol) = spec.intercept_field->transpose();
  else
    out.w_true.row(icol).setConstant(spec.intercept_level);

  Eigen::MatrixXd y = spec.design * out.w_true;
  if (spec.noise_enabled) {
    const double sd = 1.0 / std::sqrt(spec.lambda);
    const int burn = p > 0 ? 200 : 0;
    for (Eigen::Index vox = 0; vox < n; ++vox) {
      Rng rng = root.child(0x6e6f697365ull, static_cast<std::uint64_t>(vox));
      std::vector<double> e(static_cast<std::size_t>(burn + t), 0.0);
      for (std::size_t r = 0; r < e.size(); ++r) {
        double v = sd * rng.normal();
        for (int q = 0; q < p && static_cast<int>(r) - 1 - q >= 0; ++q)
          v += spec.ar_coef[q] * e[r - 1 - static_cast<std::size_t>(q)];
        e[r] = v;
      }
      for (Eigen::Index r = 0; r < t; ++r) y(r, vox) += e[static_cast<std::size_t>(r) + burn];
    }
  }

  out.dataset.y = std::move(y);
  out.dataset.x = spec.design;
  out.dataset.activity_set = spec.activity_columns;
  for (int c = 0; c < k; ++c)
    if (std::find(spec.activity_columns.begin(), spec.activity_columns.end(), c) ==
        spec.activity_columns.end())
      out.dataset.nuisance_set.push_back(c);
  out.dataset.voxel_size = lattice.voxel_size;
  out.dataset.compute_global_mean();
  out.dataset.validate(p);
  return out;
}

std::vector<Eigen::Index> draw_left_out(Eigen::Index n, double pct, std::uint64_t seed, int split) {
  if (!(pct > 0.0 && pct < 100.0)) throw std::invalid_argument("draw_left_out: pct in (0,100)");
  const Eigen::Index count = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::llround(pct / 100.0 * static_cast<double>(n))));
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng(seed).child(0x6376ull, static_cast<std::uint64_t>(split));
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index j = i + static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  std::vector<Eigen::Index> out(idx.begin(), idx.begin() + count);
  std::sort(out.begin(), out.end());
  return out;
}

double predictive_variance(double ar_variance, const Eigen::Ref<const Eigen::VectorXd>& x_act_row,
                           const Eigen::Ref<const Eigen::MatrixXd>& w_act_cov) {
  return ar_variance + x_act_row.dot(w_act_cov * x_act_row);
}

CvErrors cv_errors(const Dataset& dataset, const LaggedStats& stats, const NoiseState& noise,
                   const std::vector<SpatialPriorSpec>& specs, const MaskedLattice& lattice,
                   const GraphSet& graphs, const std::vector<Eigen::Index>& left_out,
                   const CvPlan& plan) {
  const Eigen::Index t = dataset.t(), n = dataset.n(), k = dataset.k();
  const int p = stats.p;
  const Eigen::Index d_count = static_cast<Eigen::Index>(left_out.size());
  const Eigen::Index k_act = static_cast<Eigen::Index>(dataset.activity_set.size());
  const Eigen::Index k_nui = static_cast<Eigen::Index>(dataset.nuisance_set.size());

  std::vector<std::uint8_t> zero_mask(static_cast<std::size_t>(n), 0);
  for (Eigen::Index vox : left_out) zero_mask[static_cast<std::size_t>(vox)] = 1;

  std::vector<PrecisionOperator> ops;
  ops.reserve(specs.size());
  for (const auto& s : specs) ops.emplace_back(s, lattice, graphs);
  PosteriorSystem system(std::move(ops), build_likelihood_blocks(stats, noise, &zero_mask));

  // Stage 1: out-of-sample residuals of the spatial part. The in-sample
  // special case D = {} reduces this to Y - X E(W | Y).
  const Eigen::MatrixXd x_act = [&] {
    Eigen::MatrixXd m(t, k_act);
    for (Eigen::Index j = 0; j < k_act; ++j) m.col(j) = dataset.x.col(dataset.activity_set[static_cast<std::size_t>(j)]);
    return m;
  }();
  const Eigen::MatrixXd x_nui = [&] {
    Eigen::MatrixXd m(t, k_nui);
    for (Eigen::Index j = 0; j < k_nui; ++j) m.col(j) = dataset.x.col(dataset.nuisance_set[static_cast<std::size_t>(j)]);
    return m;
  }();

  PosteriorSampler sampler(system, plan.pcg_tol);
  const Eigen::VectorXd& mu = sampler.mean();

  // In-sample convention: an empty D means evaluate at every voxel.
  std::vector<Eigen::Index> eval_set = left_out;
  if (eval_set.empty()) {
    eval_set.resize(static_cast<std::size_t>(n));
    std::iota(eval_set.begin(), eval_set.end(), 0);
  }
  const Eigen::Index n_eval = static_cast<Eigen::Index>(eval_set.size());

  Eigen::MatrixXd r(t, n_eval);
  for (Eigen::Index j = 0; j < n_eval; ++j) {
    const Eigen::Index vox = eval_set[static_cast<std::size_t>(j)];
    Eigen::VectorXd w_act(k_act);
    for (Eigen::Index a = 0; a < k_act; ++a)
      w_act[a] = mu[static_cast<Eigen::Index>(dataset.activity_set[static_cast<std::size_t>(a)]) * n + vox];
    r.col(j) = dataset.y.col(vox) - x_act * w_act;
  }

  // Stage 2: per-voxel refit of the nuisance regressors on R with the
  // original noise parameters.
  const LaggedStats nui_stats = precompute_lagged(x_nui, r, p);
  Eigen::VectorXd nui_tau2(k_nui);
  for (Eigen::Index j = 0; j < k_nui; ++j)
    nui_tau2[j] = specs[static_cast<std::size_t>(dataset.nuisance_set[static_cast<std::size_t>(j)])].tau2;

  CvErrors out;
  out.left_out = eval_set;
  out.errors.resize(t, n_eval);
  const Eigen::VectorXd a_empty(0);
  for (Eigen::Index j = 0; j < n_eval; ++j) {
    const Eigen::Index vox = eval_set[static_cast<std::size_t>(j)];
    const Eigen::VectorXd a_col = p > 0 ? Eigen::VectorXd(noise.a.col(vox)) : a_empty;
    Eigen::MatrixXd blk = noise.lambda[vox] * likelihood_block(nui_stats, j, a_col);
    blk.diagonal() += nui_tau2;
    const Eigen::VectorXd rhs = noise.lambda[vox] * likelihood_rhs(nui_stats, j, a_col);
    const Eigen::VectorXd w_nui = blk.ldlt().solve(rhs);
    out.errors.col(j) = r.col(j) - x_nui * w_nui;
  }

  // Predictive variance: AR stationary variance plus the activity-block
  // quadratic form in the RBMC covariance of the zeroed system.
  const std::vector<Eigen::MatrixXd> cov = rbmc_marginal_cov(system, sampler, plan.n_rbmc, plan.seed);
  out.variance.resize(t, n_eval);
  for (Eigen::Index j = 0; j < n_eval; ++j) {
    const Eigen::Index vox = eval_set[static_cast<std::size_t>(j)];
    const Eigen::VectorXd a_col = p > 0 ? Eigen::VectorXd(noise.a.col(vox)) : a_empty;
    const double gamma0 = ar_process_variance(a_col, noise.lambda[vox]);
    Eigen::MatrixXd act_cov(k_act, k_act);
    for (Eigen::Index a = 0; a < k_act; ++a)
      for (Eigen::Index b = 0; b < k_act; ++b)
        act_cov(a, b) = cov[static_cast<std::size_t>(vox)](dataset.activity_set[static_cast<std::size_t>(a)],
                                                           dataset.activity_set[static_cast<std::size_t>(b)]);
    for (Eigen::Index row = 0; row < t; ++row)
      out.variance(row, j) = predictive_variance(gamma0, x_act.row(row).transpose(), act_cov);
  }
  (void)k;
  return out;
}

double crps_normal(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("crps_normal: sigma must be positive");
  const double z = (x - mu) / sigma;
  return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(M_PI));
}

double ign_normal(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("ign_normal: sigma must be positive");
  const double z = (x - mu) / sigma;
  return std::log(sigma) + 0.5 * z * z + 0.5 * std::log(2.0 * M_PI);
}

double interval_score_normal(double x, double mu, double sigma, double u) {
  if (!(sigma > 0.0)) throw std::domain_error("interval_score_normal: sigma must be positive");
  const double a = normal_quantile(1.0 - 0.5 * u);
  const double lo = mu - a * sigma, hi = mu + a * sigma;
  double s = 2.0 * a * sigma;
  if (x < lo) s += 2.0 / u * (lo - x);
  if (x > hi) s += 2.0 / u * (x - hi);
  return s;
}

ScoreReport proper_scores(const Eigen::Ref<const Eigen::MatrixXd>& errors,
                          const Eigen::Ref<const Eigen::MatrixXd>& variances, double u) {
  if (errors.rows() != variances.rows() || errors.cols() != variances.cols())
    throw std::invalid_argument("proper_scores: shape mismatch");
  ScoreReport rep;
  const Eigen::Index m = errors.size();
  double sq = 0.0;
  for (Eigen::Index j = 0; j < errors.cols(); ++j)
    for (Eigen::Index i = 0; i < errors.rows(); ++i) {
      const double x = errors(i, j);
      const double sigma = std::sqrt(variances(i, j));
      rep.mae += std::abs(x);
      sq += x * x;
      rep.crps += crps_normal(x, 0.0, sigma);
      rep.ign += ign_normal(x, 0.0, sigma);
      rep.interval += interval_score_normal(x, 0.0, sigma, u);
    }
  rep.mae /= m;
  rep.rmse = std::sqrt(sq / m);
  rep.crps /= m;
  rep.ign /= m;
  rep.interval /= m;
  return rep;
}

std::vector<ScoreReport> run_cv(const Dataset& dataset, const LaggedStats& stats,
                                const NoiseState& noise, const std::vector<SpatialPriorSpec>& specs,
                                const MaskedLattice& lattice, const GraphSet& graphs,
                                const CvPlan& plan) {
  std::vector<ScoreReport> reports;
  reports.reserve(static_cast<std::size_t>(plan.n_splits));
  for (int s = 0; s < plan.n_splits; ++s) {
    const std::vector<Eigen::Index> d = draw_left_out(dataset.n(), plan.leave_out_pct, plan.seed, s);
    CvPlan split_plan = plan;
    split_plan.seed = Rng(plan.seed).child(0x7370ull, static_cast<std::uint64_t>(s)).key();
    const CvErrors errs = cv_errors(dataset, stats, noise, specs, lattice, graphs, d, split_plan);
    reports.push_back(proper_scores(errs.errors, errs.variance, plan.u));
  }
  return reports;
}

GibbsResult gibbs_oracle(const Dataset& dataset, const LaggedStats& stats,
                         const SpatialPriorSpec& icar_spec, int activity_regressor,
                         const std::vector<SpatialPriorSpec>& all_specs,
                         const MaskedLattice& lattice, const GraphSet& graphs,
                         const NoisePriorSpec& noise_prior, const GibbsConfig& config) {
  if (stats.p != 0) throw std::invalid_argument("gibbs_oracle: P = 0 only");
  if (icar_spec.kind != PriorKind::ICAR1)
    throw std::invalid_argument("gibbs_oracle: ICAR1 spatial prior required");
  const Eigen::Index n = lattice.n, k = dataset.k(), t = dataset.t();
  if (k * n > 2000) throw std::invalid_argument("gibbs_oracle: dimension too large");

  const Eigen::MatrixXd g = Eigen::MatrixXd(graphs.g.matrix);
  const int nullity = graphs.n_components;
  const double q1 = icar_spec.hyper.q1, q2 = icar_spec.hyper.q2;
  Rng rng = Rng(config.seed).child(0x67696262ull);

  GibbsResult res;
  res.tau2_chain.reserve(static_cast<std::size_t>(config.iterations));

  if (config.prior_only) {
    // beta | tau2 from the deflated ICAR prior, tau2 | beta conjugate.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    const Eigen::VectorXd w = eig.eigenvalues();
    const Eigen::MatrixXd v = eig.eigenvectors();
    double tau2 = q1 * q2;
    for (int it = 0; it < config.burnin + config.iterations; ++it) {
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (w[i] < 1e-10 * w[n - 1]) continue;
        beta += v.col(i) * (rng.normal() / std::sqrt(tau2 * w[i]));
      }
      const double quad = beta.dot(g * beta);
      const double shape = q2 + 0.5 * (n - nullity);
      const double rate = 1.0 / q1 + 0.5 * quad;
      tau2 = rng.gamma(shape, 1.0 / rate);
      if (it >= config.burnin) res.tau2_chain.push_back(tau2);
    }
    res.tau2_mean = std::accumulate(res.tau2_chain.begin(), res.tau2_chain.end(), 0.0) /
                    static_cast<double>(res.tau2_chain.size());
    return res;
  }

  const Eigen::Index dim = k * n;
  double tau2 = q1 * q2;
  Eigen::VectorXd lambda = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd beta_sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd beta_sq = Eigen::VectorXd::Zero(dim);

  Eigen::MatrixXd q_dense(dim, dim);
  Eigen::VectorXd b(dim), z(dim);
  const Eigen::VectorXd a_empty(0);
  for (int it = 0; it < config.burnin + config.iterations; ++it) {
    // beta | tau2, lambda, y : exact dense GMRF draw.
    q_dense.setZero();
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      const auto& spec = all_specs[static_cast<std::size_t>(kk)];
      if (static_cast<int>(kk) == activity_regressor)
        q_dense.block(kk * n, kk * n, n, n) = tau2 * g;
      else
        q_dense.block(kk * n, kk * n, n, n) =
            spec.tau2 * Eigen::MatrixXd::Identity(n, n);
    }
    for (Eigen::Index vox = 0; vox < n; ++vox)
      for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index c = 0; c < k; ++c)
          q_dense(a * n + vox, c * n + vox) += lambda[vox] * stats.xtx(a, c);
        b[a * n + vox] = lambda[vox] * stats.ytx(vox, a);
      }
    Eigen::LLT<Eigen::MatrixXd> llt(q_dense);
    if (llt.info() != Eigen::Success) throw std::runtime_error("gibbs_oracle: factorization failed");
    const Eigen::VectorXd mu = llt.solve(b);
    for (Eigen::Index i = 0; i < dim; ++i) z[i] = rng.normal();
    const Eigen::VectorXd beta = mu + llt.matrixU().solve(z);

    // tau2 | beta : conjugate gamma on the ICAR regressor block.
    const Eigen::VectorXd beta_act = beta.segment(static_cast<Eigen::Index>(activity_regressor) * n, n);
    const double quad = beta_act.dot(g * beta_act);
    tau2 = rng.gamma(q2 + 0.5 * (n - nullity), 1.0 / (1.0 / q1 + 0.5 * quad));

    // lambda | beta : conjugate gamma per voxel.
    Eigen::VectorXd w_col(k);
    for (Eigen::Index vox = 0; vox < n; ++vox) {
      for (Eigen::Index kk = 0; kk < k; ++kk) w_col[kk] = beta[kk * n + vox];
      const double ln = loglik_term(stats, vox, w_col, a_empty);
      lambda[vox] = rng.gamma(noise_prior.u2 + 0.5 * static_cast<double>(t),
                              1.0 / (1.0 / noise_prior.u1 + 0.5 * ln));
    }

    if (it >= config.burnin) {
      res.tau2_chain.push_back(tau2);
      beta_sum += beta;
      beta_sq += beta.cwiseProduct(beta);
    }
  }

  const double m = static_cast<double>(config.iterations);
  res.beta_mean = beta_sum / m;
  res.beta_sd = ((beta_sq / m) - res.beta_mean.cwiseProduct(res.beta_mean)).cwiseMax(0.0).cwiseSqrt();
  res.tau2_mean = std::accumulate(res.tau2_chain.begin(), res.tau2_chain.end(), 0.0) /
                  static_cast<double>(res.tau2_chain.size());
  return res;
}

}  // namespace ebgmrf
