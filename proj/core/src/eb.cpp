#include "ebgmrf/eb.hpp"

#include <Eigen/QR>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "ebgmrf/dense_oracle.hpp"
#include "ebgmrf/krylov.hpp"

namespace ebgmrf {

HyperState state_from(const std::vector<SpatialPriorSpec>& specs, const NoiseState& noise) {
  HyperState st;
  st.spatial.resize(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    st.spatial[k].tau0 = std::log(specs[k].tau2);
    st.spatial[k].kappa0 = specs[k].has_kappa() ? std::log(specs[k].kappa2) : 0.0;
    st.spatial[k].h0x = std::log(specs[k].hx);
    st.spatial[k].h0y = std::log(specs[k].hy);
  }
  st.lambda0 = noise.lambda.array().log();
  st.a0 = noise.a.unaryExpr([](double a) { return a0_from_a(a); });
  return st;
}

void state_to(const HyperState& st, std::vector<SpatialPriorSpec>& specs, NoiseState& noise) {
  for (std::size_t k = 0; k < specs.size(); ++k) {
    specs[k].tau2 = std::exp(st.spatial[k].tau0);
    if (specs[k].has_kappa()) specs[k].kappa2 = std::exp(st.spatial[k].kappa0);
    if (specs[k].anisotropic()) {
      specs[k].hx = std::exp(st.spatial[k].h0x);
      specs[k].hy = std::exp(st.spatial[k].h0y);
    }
  }
  noise.lambda = st.lambda0.array().exp();
  noise.a = st.a0.unaryExpr([](double a0) { return a_from_a0(a0); });
}

void init_spatial_from_hyperprior(SpatialPriorSpec& spec) {
  const double ln2 = std::log(2.0);
  switch (spec.hyper.variant) {
    case HyperPriorSpec::Variant::PcMatern: {
      const double nu = spec.nu();
      const double l1 = spec.hyper.lambda1(nu);
      const double l3 = spec.hyper.lambda3(nu);
      const double kappa = std::pow(ln2 / l1, 2.0 / 3.0);  // median of kappa^{3/2} ~ Exp(l1)
      const double s = ln2 / (l3 * std::pow(kappa, -nu));  // median of 1/tau | kappa
      spec.kappa2 = kappa * kappa;
      spec.tau2 = 1.0 / (s * s);
      break;
    }
    case HyperPriorSpec::Variant::LogNormalM1:
      spec.tau2 = std::exp(spec.hyper.mu_tau0);
      spec.kappa2 = std::exp(spec.hyper.mu_kappa0);
      break;
    case HyperPriorSpec::Variant::PcIcar: {
      const double s = ln2 / spec.hyper.lambda2();  // median of 1/tau ~ Exp(lambda2)
      spec.tau2 = 1.0 / (s * s);
      break;
    }
    case HyperPriorSpec::Variant::GammaTau2:
      spec.tau2 = spec.hyper.q1 * spec.hyper.q2;
      break;
    case HyperPriorSpec::Variant::None:
      break;
  }
  spec.hx = 1.0;
  spec.hy = 1.0;
}

NoiseState init_noise(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int p,
                      double lambda_ceiling, double a_clip) {
  const Eigen::Index t = x.rows(), n = y.cols();
  if (p < 0 || p >= t) throw std::invalid_argument("init_noise: needs 0 <= P < T");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) throw std::invalid_argument("init_noise: rank-deficient design matrix");
  const Eigen::MatrixXd w = qr.solve(y);
  const Eigen::MatrixXd resid = y - x * w;

  NoiseState noise;
  noise.lambda.resize(n);
  noise.a = Eigen::MatrixXd::Zero(p, n);
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    const auto e = resid.col(vox);
    Eigen::VectorXd a_col = Eigen::VectorXd::Zero(p);
    if (p > 0) {
      Eigen::MatrixXd lag(t - p, p);
      for (int q = 0; q < p; ++q) lag.col(q) = e.segment(p - 1 - q, t - p);
      const Eigen::VectorXd rhs = e.tail(t - p);
      a_col = (lag.transpose() * lag)
                  .ldlt()
                  .solve(lag.transpose() * rhs)
                  .cwiseMax(-a_clip)
                  .cwiseMin(a_clip);
      noise.a.col(vox) = a_col;
    }
    double ss = 0.0;
    for (Eigen::Index r = p; r < t; ++r) {
      double innov = e[r];
      for (int q = 0; q < p; ++q) innov -= a_col[q] * e[r - 1 - q];
      ss += innov * innov;
    }
    const double ms = ss / static_cast<double>(t - p);
    noise.lambda[vox] = ms > 0.0 ? std::min(1.0 / ms, lambda_ceiling) : lambda_ceiling;
  }
  return noise;
}

std::string SpatialCoordId::name() const {
  const char* suffix = kind == Kind::Tau0 ? "tau0" : kind == Kind::Kappa0 ? "kappa0"
                                                 : kind == Kind::H0x      ? "h0x"
                                                                          : "h0y";
  return "k" + std::to_string(regressor) + "." + suffix;
}

std::vector<SpatialCoordId> enumerate_spatial_coords(const std::vector<SpatialPriorSpec>& specs) {
  std::vector<SpatialCoordId> ids;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const int kk = static_cast<int>(k);
    if (specs[k].optimize_tau2) ids.push_back({kk, SpatialCoordId::Kind::Tau0});
    if (specs[k].optimize_kappa2 && specs[k].has_kappa())
      ids.push_back({kk, SpatialCoordId::Kind::Kappa0});
    if (specs[k].optimize_h && specs[k].anisotropic()) {
      ids.push_back({kk, SpatialCoordId::Kind::H0x});
      ids.push_back({kk, SpatialCoordId::Kind::H0y});
    }
  }
  return ids;
}

namespace {

struct SpatialTraces {
  double t_i = 0.0;      // tr(Q~^{-1}(J^kk x I))
  double t_core = 0.0;   // tr(Q~^{-1}(J^kk x C)), C = K or G
  double t_core2 = 0.0;  // tr(Q~^{-1}(J^kk x C C))
  double t_kinv = 0.0;   // tr(K^{-1})
  double t_kinv2 = 0.0;  // tr(K^{-1} K^{-1})
  // AM2 only, axis 0 = x, 1 = y.
  double t_kdk[2] = {0.0, 0.0};           // tr(Q~^{-1}(J^kk x sym(K dK)))
  double t_h[2] = {0.0, 0.0};             // tr(Q~^{-1}(J^kk x (dK dK + sym(K d2K))))
  double t_kinv_dk[2] = {0.0, 0.0};       // tr(K^{-1} dK)
  double t_kinv_d2k[2] = {0.0, 0.0};      // tr(K^{-1} d2K)
  double t_kinv_dk_kinv[2] = {0.0, 0.0};  // tr(K^{-1} dK K^{-1} dK)
};

bool needs_core_solves(PriorKind kind) {
  return kind == PriorKind::M1 || kind == PriorKind::M2 || kind == PriorKind::AM2;
}

double trace_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.cwiseProduct(b.transpose()).sum();
}

struct TraceWork {
  std::vector<SpatialTraces> spatial;  // per regressor
  Eigen::VectorXd t_lambda;            // per voxel, tr(Q~^{-1} Blk_n(Q~_n))
  Eigen::MatrixXd t_a;                 // P x N, tr(Q~^{-1} Blk_n(dQ~_n/dA_pn))
  Eigen::VectorXd mu;                  // K N posterior mean
};

/// Per-voxel workspace of dQ~_n/dA_{p,n} blocks, built once per evaluation.
std::vector<double> build_da_blocks(const LaggedStats& stats, const NoiseState& noise) {
  const Eigen::Index n = stats.ytx.rows();
  const int p = stats.p, k = stats.k;
  std::vector<double> out;
  if (p == 0) return out;
  out.assign(static_cast<std::size_t>(n) * p * k * k, 0.0);
  for (Eigen::Index vox = 0; vox < n; ++vox)
    for (int pi = 0; pi < p; ++pi)
      Eigen::Map<Eigen::MatrixXd>(
          out.data() + (static_cast<std::size_t>(vox) * p + pi) * k * k, k, k) =
          likelihood_block_da(stats, vox, pi, noise.a.col(vox));
  return out;
}

TraceWork compute_traces(const PosteriorSystem& system, const LaggedStats& stats,
                         const std::vector<double>& da_blocks, const EbTraceOptions& opts) {
  const Eigen::Index k = system.k(), n = system.n(), dim = system.dim();
  const int p = stats.p;
  TraceWork tw;
  tw.spatial.resize(static_cast<std::size_t>(k));
  tw.t_lambda = Eigen::VectorXd::Zero(n);
  tw.t_a = Eigen::MatrixXd::Zero(p, n);

  const Eigen::VectorXd b = system.rhs();
  const Eigen::VectorXd diag = system.diagonal();
  PcgOptions pcg;
  pcg.tol = opts.pcg_tol;
  pcg.max_iter = opts.pcg_max_iter;
  pcg.jacobi = &diag;
  pcg.x0 = opts.mu_warm && opts.mu_warm->size() == dim ? opts.mu_warm : nullptr;
  auto apply_sys = [&](const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) {
    system.apply(v, out);
  };
  tw.mu = pcg_solve(apply_sys, b, pcg).x;

  const auto& lik = system.likelihood();

  if (opts.exact) {
    DenseOracle oracle(system);
    const Eigen::MatrixXd& inv = oracle.inverse();
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      const auto& op = system.priors()[static_cast<std::size_t>(kk)];
      SpatialTraces& tr = tw.spatial[static_cast<std::size_t>(kk)];
      const Eigen::MatrixXd invblk = inv.block(kk * n, kk * n, n, n);
      tr.t_i = invblk.trace();
      if (op.kind() == PriorKind::GS) continue;
      const Eigen::MatrixXd core = DenseOracle::dense_core(op);
      tr.t_core = trace_product(invblk, core);
      tr.t_core2 = trace_product(invblk, core * core);
      if (needs_core_solves(op.kind())) {
        const Eigen::MatrixXd kinv = core.inverse();
        tr.t_kinv = kinv.trace();
        tr.t_kinv2 = kinv.squaredNorm();
        if (op.kind() == PriorKind::AM2) {
          for (int axis = 0; axis < 2; ++axis) {
            const auto& gset = op.graphs();
            const double hz = op.hz();
            const Eigen::MatrixXd dk =
                (axis == 0 ? op.hx() * Eigen::MatrixXd(gset.gx.matrix)
                           : op.hy() * Eigen::MatrixXd(gset.gy.matrix)) -
                hz * Eigen::MatrixXd(gset.gz.matrix);
            const Eigen::MatrixXd d2k =
                (axis == 0 ? op.hx() * Eigen::MatrixXd(gset.gx.matrix)
                           : op.hy() * Eigen::MatrixXd(gset.gy.matrix)) +
                hz * Eigen::MatrixXd(gset.gz.matrix);
            tr.t_kdk[axis] = trace_product(invblk, core * dk);
            tr.t_h[axis] = trace_product(invblk, dk * dk + core * d2k);
            tr.t_kinv_dk[axis] = trace_product(kinv, dk);
            tr.t_kinv_d2k[axis] = trace_product(kinv, d2k);
            tr.t_kinv_dk_kinv[axis] = trace_product(kinv * dk, kinv * dk);
          }
        }
      }
    }
    for (Eigen::Index vox = 0; vox < n; ++vox) {
      if (lik.is_zeroed(vox)) continue;
      const auto blk = lik.block(vox);
      double acc = 0.0;
      for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index c = 0; c < k; ++c) acc += inv(a * n + vox, c * n + vox) * blk(a, c);
      tw.t_lambda[vox] = acc;
      for (int pi = 0; pi < p; ++pi) {
        const Eigen::Map<const Eigen::MatrixXd> dblk(
            da_blocks.data() + (static_cast<std::size_t>(vox) * p + pi) * k * k, k, k);
        double acc_a = 0.0;
        for (Eigen::Index a = 0; a < k; ++a)
          for (Eigen::Index c = 0; c < k; ++c) acc_a += inv(a * n + vox, c * n + vox) * dblk(a, c);
        tw.t_a(pi, vox) = acc_a;
      }
    }
    return tw;
  }

  // Hutchinson path: one slot per probe, reduced in probe order afterwards,
  // so concurrent execution is reproducible.
  const int ns = opts.n_probes;
  const ProbeStream q_probes(Rng(opts.seed).child(0x71ull, opts.iteration).key(), dim);
  const ProbeStream k_probes(Rng(opts.seed).child(0x6bull, opts.iteration).key(), n);

  struct Slot {
    std::vector<SpatialTraces> spatial;
    Eigen::VectorXd t_lambda;
    Eigen::MatrixXd t_a;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(ns));

  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < ns; ++j) {
    try {
      Slot& slot = slots[static_cast<std::size_t>(j)];
      slot.spatial.resize(static_cast<std::size_t>(k));
      slot.t_lambda = Eigen::VectorXd::Zero(n);
      slot.t_a = Eigen::MatrixXd::Zero(p, n);

      const Eigen::VectorXd v = q_probes.probe(static_cast<std::uint64_t>(j));
      PcgOptions popt;
      popt.tol = opts.pcg_tol;
      popt.max_iter = opts.pcg_max_iter;
      popt.jacobi = &diag;
      const Eigen::VectorXd u = pcg_solve(apply_sys, v, popt).x;

      for (Eigen::Index kk = 0; kk < k; ++kk) {
        const auto& op = system.priors()[static_cast<std::size_t>(kk)];
        SpatialTraces& tr = slot.spatial[static_cast<std::size_t>(kk)];
        const auto vk = v.segment(kk * n, n);
        const auto uk = u.segment(kk * n, n);
        tr.t_i = uk.dot(vk);
        if (op.kind() == PriorKind::GS) continue;
        const Eigen::VectorXd cv = op.apply_core(vk);
        tr.t_core = uk.dot(cv);
        tr.t_core2 = uk.dot(op.apply_core(cv));
        if (op.kind() == PriorKind::AM2) {
          for (int axis = 0; axis < 2; ++axis) {
            const Eigen::VectorXd dv = op.apply_dk_dh(axis, vk);
            const Eigen::VectorXd d2v = op.apply_d2k_dh2(axis, vk);
            tr.t_kdk[axis] = uk.dot(op.apply_core(dv));
            tr.t_h[axis] = uk.dot(op.apply_dk_dh(axis, dv)) + uk.dot(op.apply_core(d2v));
          }
        }
      }

      // Independent N-dimensional probes for the K^{-1} traces.
      bool any_core = false;
      for (Eigen::Index kk = 0; kk < k; ++kk)
        any_core |= needs_core_solves(system.priors()[static_cast<std::size_t>(kk)].kind());
      if (any_core) {
        const Eigen::VectorXd w = k_probes.probe(static_cast<std::uint64_t>(j));
        for (Eigen::Index kk = 0; kk < k; ++kk) {
          const auto& op = system.priors()[static_cast<std::size_t>(kk)];
          if (!needs_core_solves(op.kind())) continue;
          SpatialTraces& tr = slot.spatial[static_cast<std::size_t>(kk)];
          Eigen::VectorXd core_diag = op.core_matrix()->diagonal();
          PcgOptions kopt;
          kopt.tol = opts.pcg_tol;
          kopt.max_iter = opts.pcg_max_iter;
          kopt.jacobi = &core_diag;
          auto apply_core = [&](const Eigen::Ref<const Eigen::VectorXd>& in,
                                Eigen::Ref<Eigen::VectorXd> out) { op.apply_core(in, out); };
          const Eigen::VectorXd s = pcg_solve(apply_core, w, kopt).x;
          tr.t_kinv = w.dot(s);
          tr.t_kinv2 = s.squaredNorm();
          if (op.kind() == PriorKind::AM2) {
            for (int axis = 0; axis < 2; ++axis) {
              const Eigen::VectorXd dw = op.apply_dk_dh(axis, w);
              const Eigen::VectorXd ds = op.apply_dk_dh(axis, s);
              tr.t_kinv_dk[axis] = s.dot(dw);
              tr.t_kinv_d2k[axis] = s.dot(op.apply_d2k_dh2(axis, w));
              const Eigen::VectorXd z = pcg_solve(apply_core, dw, kopt).x;
              tr.t_kinv_dk_kinv[axis] = ds.dot(z);
            }
          }
        }
      }

      // Per-voxel likelihood traces share the same probe solve.
      Eigen::VectorXd vn(k), un(k);
      for (Eigen::Index vox = 0; vox < n; ++vox) {
        if (lik.is_zeroed(vox)) continue;
        for (Eigen::Index kk = 0; kk < k; ++kk) {
          vn[kk] = v[kk * n + vox];
          un[kk] = u[kk * n + vox];
        }
        slot.t_lambda[vox] = un.dot(lik.block(vox) * vn);
        for (int pi = 0; pi < p; ++pi) {
          const Eigen::Map<const Eigen::MatrixXd> dblk(
              da_blocks.data() + (static_cast<std::size_t>(vox) * p + pi) * k * k, k, k);
          slot.t_a(pi, vox) = un.dot(dblk * vn);
        }
      }
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  const double inv_ns = 1.0 / ns;
  for (int j = 0; j < ns; ++j) {
    const Slot& slot = slots[static_cast<std::size_t>(j)];
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      SpatialTraces& acc = tw.spatial[static_cast<std::size_t>(kk)];
      const SpatialTraces& tr = slot.spatial[static_cast<std::size_t>(kk)];
      acc.t_i += inv_ns * tr.t_i;
      acc.t_core += inv_ns * tr.t_core;
      acc.t_core2 += inv_ns * tr.t_core2;
      acc.t_kinv += inv_ns * tr.t_kinv;
      acc.t_kinv2 += inv_ns * tr.t_kinv2;
      for (int axis = 0; axis < 2; ++axis) {
        acc.t_kdk[axis] += inv_ns * tr.t_kdk[axis];
        acc.t_h[axis] += inv_ns * tr.t_h[axis];
        acc.t_kinv_dk[axis] += inv_ns * tr.t_kinv_dk[axis];
        acc.t_kinv_d2k[axis] += inv_ns * tr.t_kinv_d2k[axis];
        acc.t_kinv_dk_kinv[axis] += inv_ns * tr.t_kinv_dk_kinv[axis];
      }
    }
    tw.t_lambda += inv_ns * slot.t_lambda;
    tw.t_a += inv_ns * slot.t_a;
  }
  return tw;
}

}  // namespace

GradientReport grad_log_marginal_posterior(const LaggedStats& stats,
                                           const std::vector<SpatialPriorSpec>& specs,
                                           const NoiseState& noise, const MaskedLattice& lattice,
                                           const GraphSet& graphs, const NoisePriorSpec& noise_prior,
                                           const EbTraceOptions& opts,
                                           const std::vector<std::uint8_t>* zero_voxels) {
  const Eigen::Index n = lattice.n;
  const Eigen::Index k = static_cast<Eigen::Index>(specs.size());
  const int p = stats.p;

  std::vector<PrecisionOperator> ops;
  ops.reserve(specs.size());
  for (const auto& s : specs) ops.emplace_back(s, lattice, graphs);
  PosteriorSystem system(std::move(ops),
                         build_likelihood_blocks(stats, noise, zero_voxels));

  const std::vector<double> da_blocks = build_da_blocks(stats, noise);
  const TraceWork tw = compute_traces(system, stats, da_blocks, opts);

  GradientReport rep;
  rep.coords = enumerate_spatial_coords(specs);
  rep.grad.resize(static_cast<Eigen::Index>(rep.coords.size()));
  rep.hess.resize(static_cast<Eigen::Index>(rep.coords.size()));
  rep.mu = tw.mu;

  // mu as K rows over voxels; quadratic forms per regressor.
  const auto m_row = [&](Eigen::Index kk) { return tw.mu.segment(kk * n, n); };

  for (std::size_t ci = 0; ci < rep.coords.size(); ++ci) {
    const SpatialCoordId id = rep.coords[ci];
    const auto& op = system.priors()[static_cast<std::size_t>(id.regressor)];
    const SpatialTraces& tr = tw.spatial[static_cast<std::size_t>(id.regressor)];
    const HyperPriorEval hp = hyperprior_eval(specs[static_cast<std::size_t>(id.regressor)]);
    const double tau2 = op.tau2(), kappa2 = op.kappa2();
    const Eigen::VectorXd m = m_row(id.regressor);
    double g = 0.0, h = 0.0;

    switch (id.kind) {
      case SpatialCoordId::Kind::Tau0: {
        double t_d = 0.0, q_d = 0.0, logdet_half = 0.0;
        switch (op.kind()) {
          case PriorKind::GS:
            t_d = tr.t_i;
            q_d = m.squaredNorm();
            logdet_half = 0.5 * n;
            break;
          case PriorKind::ICAR1:
            t_d = tr.t_core;
            q_d = m.dot(op.apply_core(m));
            logdet_half = 0.5 * (n - op.nullity());
            break;
          case PriorKind::M1:
            t_d = tr.t_core;
            q_d = m.dot(op.apply_core(m));
            logdet_half = 0.5 * n;
            break;
          case PriorKind::ICAR2:
            t_d = tr.t_core2;
            q_d = op.apply_core(m).squaredNorm();
            logdet_half = 0.5 * (n - op.nullity());
            break;
          case PriorKind::M2:
          case PriorKind::AM2:
            t_d = tr.t_core2;
            q_d = op.apply_core(m).squaredNorm();
            logdet_half = 0.5 * n;
            break;
        }
        g = logdet_half - 0.5 * tau2 * (t_d + q_d) + hp.d_tau0;
        h = -0.5 * tau2 * (t_d + q_d) + hp.d2_tau0;
        break;
      }
      case SpatialCoordId::Kind::Kappa0: {
        const double q_i = m.squaredNorm();
        if (op.kind() == PriorKind::M1) {
          g = 0.5 * kappa2 * tr.t_kinv - 0.5 * tau2 * kappa2 * (tr.t_i + q_i) + hp.d_kappa0;
          h = 0.5 * kappa2 * tr.t_kinv - 0.5 * kappa2 * kappa2 * tr.t_kinv2 -
              0.5 * tau2 * kappa2 * (tr.t_i + q_i) + hp.d2_kappa0;
        } else {  // M2 / AM2
          const double q_core = m.dot(op.apply_core(m));
          g = kappa2 * tr.t_kinv - tau2 * kappa2 * (tr.t_core + q_core) + hp.d_kappa0;
          h = kappa2 * tr.t_kinv - kappa2 * kappa2 * tr.t_kinv2 -
              tau2 * kappa2 * (tr.t_core + q_core) - tau2 * kappa2 * kappa2 * (tr.t_i + q_i) +
              hp.d2_kappa0;
        }
        break;
      }
      case SpatialCoordId::Kind::H0x:
      case SpatialCoordId::Kind::H0y: {
        const int axis = id.kind == SpatialCoordId::Kind::H0x ? 0 : 1;
        const Eigen::VectorXd dm = op.apply_dk_dh(axis, m);
        const double q_kdk = op.apply_core(m).dot(dm);
        const double q_h = dm.squaredNorm() + op.apply_core(m).dot(op.apply_d2k_dh2(axis, m));
        const double hp_g = axis == 0 ? hp.d_h0x : hp.d_h0y;
        const double hp_h = axis == 0 ? hp.d2_h0x : hp.d2_h0y;
        g = tr.t_kinv_dk[axis] - tau2 * (tr.t_kdk[axis] + q_kdk) + hp_g;
        h = -tr.t_kinv_dk_kinv[axis] + tr.t_kinv_d2k[axis] - tau2 * (tr.t_h[axis] + q_h) + hp_h;
        break;
      }
    }
    rep.grad[static_cast<Eigen::Index>(ci)] = g;
    rep.hess[static_cast<Eigen::Index>(ci)] = h;
  }

  // Noise coordinates.
  rep.grad_lambda0 = Eigen::VectorXd::Zero(n);
  rep.grad_a0 = Eigen::MatrixXd::Zero(p, n);
  const auto& lik = system.likelihood();
  Eigen::VectorXd m_col(k);
  const Eigen::VectorXd a_empty(0);
  for (Eigen::Index vox = 0; vox < n; ++vox) {
    if (lik.is_zeroed(vox)) continue;
    for (Eigen::Index kk = 0; kk < k; ++kk) m_col[kk] = tw.mu[kk * n + vox];
    const Eigen::VectorXd a_col = p > 0 ? Eigen::VectorXd(noise.a.col(vox)) : a_empty;
    const double lam = noise.lambda[vox];
    const double ln = loglik_term(stats, vox, m_col, a_col);
    rep.grad_lambda0[vox] = 0.5 * (stats.t - p) - 0.5 * lam * tw.t_lambda[vox] - 0.5 * lam * ln +
                            (noise_prior.u2 - 1.0) - lam / noise_prior.u1;
    if (p > 0) {
      const Eigen::VectorXd dl = loglik_term_da(stats, vox, m_col, a_col);
      for (int pi = 0; pi < p; ++pi) {
        const double da = -0.5 * lam * dl[pi] - 0.5 * lam * tw.t_a(pi, vox) -
                          noise_prior.tau_a2 * a_col[pi];
        rep.grad_a0(pi, vox) = da * a_chain(a_col[pi]);
      }
    }
  }
  return rep;
}

namespace {

struct FlatState {
  Eigen::VectorXd v;

  static FlatState pack(const HyperState& st) {
    const Eigen::Index ks = static_cast<Eigen::Index>(st.spatial.size());
    FlatState f;
    f.v.resize(4 * ks + st.lambda0.size() + st.a0.size());
    Eigen::Index at = 0;
    for (const auto& s : st.spatial) {
      f.v[at++] = s.tau0;
      f.v[at++] = s.kappa0;
      f.v[at++] = s.h0x;
      f.v[at++] = s.h0y;
    }
    f.v.segment(at, st.lambda0.size()) = st.lambda0;
    at += st.lambda0.size();
    if (st.a0.size() > 0)
      f.v.segment(at, st.a0.size()) = Eigen::Map<const Eigen::VectorXd>(st.a0.data(), st.a0.size());
    return f;
  }

  void unpack(HyperState& st) const {
    Eigen::Index at = 0;
    for (auto& s : st.spatial) {
      s.tau0 = v[at++];
      s.kappa0 = v[at++];
      s.h0x = v[at++];
      s.h0y = v[at++];
    }
    st.lambda0 = v.segment(at, st.lambda0.size());
    at += st.lambda0.size();
    if (st.a0.size() > 0)
      Eigen::Map<Eigen::VectorXd>(st.a0.data(), st.a0.size()) = v.segment(at, st.a0.size());
  }
};

}  // namespace

FitResult run_optimizer(const LaggedStats& stats, std::vector<SpatialPriorSpec> specs,
                        NoiseState noise, const MaskedLattice& lattice, const GraphSet& graphs,
                        const NoisePriorSpec& noise_prior, const OptimizerConfig& config) {
  const Eigen::Index n = lattice.n;
  const int p = stats.p;
  HyperState state = state_from(specs, noise);
  const std::vector<SpatialCoordId> coords = enumerate_spatial_coords(specs);
  const Eigen::Index nc = static_cast<Eigen::Index>(coords.size());

  Eigen::VectorXd gbar_s = Eigen::VectorXd::Zero(nc), hbar_s = Eigen::VectorXd::Zero(nc);
  Eigen::VectorXd dtheta_s = Eigen::VectorXd::Zero(nc);
  Eigen::VectorXd gbar_l = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd gbar_a = Eigen::MatrixXd::Zero(p, n);
  bool first = true;

  Eigen::VectorXd mu_warm;
  std::deque<Eigen::VectorXd> polyak;
  FitResult result;

  const int total_iters = config.warmup + config.n_iter;
  for (int it = 1; it <= total_iters; ++it) {
    state_to(state, specs, noise);

    EbTraceOptions topt;
    topt.exact = config.exact_traces;
    topt.n_probes = config.n_probes;
    topt.seed = config.seed;
    topt.iteration = static_cast<std::uint64_t>(it);
    topt.pcg_tol = config.pcg_tol;
    topt.pcg_max_iter = config.pcg_max_iter;
    topt.mu_warm = mu_warm.size() > 0 ? &mu_warm : nullptr;

    GradientReport rep = grad_log_marginal_posterior(stats, specs, noise, lattice, graphs,
                                                     noise_prior, topt);
    mu_warm = rep.mu;

    if (first) {
      gbar_s = rep.grad;
      hbar_s = rep.hess;
      gbar_l = rep.grad_lambda0;
      gbar_a = rep.grad_a0;
      first = false;
    } else {
      gbar_s = config.gamma1 * gbar_s + (1.0 - config.gamma1) * rep.grad;
      hbar_s = config.gamma2 * hbar_s + (1.0 - config.gamma2) * rep.hess;
      gbar_l = config.gamma1 * gbar_l + (1.0 - config.gamma1) * rep.grad_lambda0;
      gbar_a = config.gamma1 * gbar_a + (1.0 - config.gamma1) * rep.grad_a0;
    }

    const bool warming = it <= config.warmup;
    const int j = warming ? 1 : it - config.warmup;
    const double eta = learning_rate(config, j);

    Eigen::VectorXd step_s(nc);
    if (warming) {
      step_s = config.eta_n * learning_rate(config, 1) * gbar_s;
    } else {
      for (Eigen::Index i = 0; i < nc; ++i) {
        // Sign safeguard: force the averaged Hessian negative so the Newton
        // step never opposes the gradient.
        const double h_eff = -std::max(std::abs(hbar_s[i]), config.hessian_floor);
        double d = -(eta / h_eff) * gbar_s[i];
        if (config.momentum) d += config.eta_mom * dtheta_s[i];
        step_s[i] = d;
      }
      dtheta_s = step_s;
    }
    const double eta_noise = warming ? config.eta_n * learning_rate(config, 1)
                                     : config.eta_n * eta;

    for (Eigen::Index i = 0; i < nc; ++i) {
      auto& sc = state.spatial[static_cast<std::size_t>(coords[static_cast<std::size_t>(i)].regressor)];
      double* target = nullptr;
      switch (coords[static_cast<std::size_t>(i)].kind) {
        case SpatialCoordId::Kind::Tau0: target = &sc.tau0; break;
        case SpatialCoordId::Kind::Kappa0: target = &sc.kappa0; break;
        case SpatialCoordId::Kind::H0x: target = &sc.h0x; break;
        case SpatialCoordId::Kind::H0y: target = &sc.h0y; break;
      }
      *target += step_s[i];
      if (!std::isfinite(*target))
        throw std::runtime_error("run_optimizer: non-finite state at iteration " +
                                 std::to_string(it) + ", coordinate " +
                                 coords[static_cast<std::size_t>(i)].name());
      result.diagnostics.push_back({it, coords[static_cast<std::size_t>(i)].name(), *target,
                                    gbar_s[i], step_s[i]});
    }

    state.lambda0 += eta_noise * gbar_l;
    if (p > 0) state.a0 += eta_noise * gbar_a;
    if (!state.lambda0.allFinite() || !state.a0.allFinite())
      throw std::runtime_error("run_optimizer: non-finite noise state at iteration " +
                               std::to_string(it));
    result.diagnostics.push_back({it, "lambda0.mean", state.lambda0.mean(), gbar_l.norm(),
                                  eta_noise * gbar_l.norm()});
    if (p > 0)
      result.diagnostics.push_back({it, "a0.mean", state.a0.mean(), gbar_a.norm(),
                                    eta_noise * gbar_a.norm()});

    if (!warming) {
      polyak.push_back(FlatState::pack(state).v);
      if (static_cast<int>(polyak.size()) > config.n_polyak) polyak.pop_front();
    }
  }

  // Polyak average of the final iterates.
  FlatState avg = FlatState::pack(state);
  avg.v.setZero();
  for (const auto& v : polyak) avg.v += v;
  avg.v /= static_cast<double>(polyak.size());
  avg.unpack(state);

  state_to(state, specs, noise);
  result.specs = std::move(specs);
  result.noise = std::move(noise);
  result.state = std::move(state);
  return result;
}

}  // namespace ebgmrf
