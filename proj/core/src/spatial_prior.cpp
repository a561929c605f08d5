#include "ebgmrf/spatial_prior.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <stdexcept>

#include "ebgmrf/krylov.hpp"

namespace ebgmrf {

std::string prior_kind_name(PriorKind kind) {
  switch (kind) {
    case PriorKind::GS: return "GS";
    case PriorKind::ICAR1: return "ICAR1";
    case PriorKind::M1: return "M1";
    case PriorKind::ICAR2: return "ICAR2";
    case PriorKind::M2: return "M2";
    case PriorKind::AM2: return "AM2";
  }
  return "?";
}

PriorKind prior_kind_from_name(const std::string& name) {
  if (name == "GS") return PriorKind::GS;
  if (name == "ICAR1") return PriorKind::ICAR1;
  if (name == "M1") return PriorKind::M1;
  if (name == "ICAR2") return PriorKind::ICAR2;
  if (name == "M2") return PriorKind::M2;
  if (name == "AM2") return PriorKind::AM2;
  throw std::invalid_argument("unknown prior kind: " + name);
}

double HyperPriorSpec::lambda1(double nu, int d) const {
  return -std::log(xi1) * std::pow(rho0 / std::sqrt(8.0 * nu), 0.5 * d);
}

double HyperPriorSpec::lambda2() const {
  return -std::sqrt(variance_constant) * std::log(xi2) / sigma0;
}

double HyperPriorSpec::lambda3(double nu, int d) const {
  const double ratio = std::tgamma(nu) / (std::tgamma(nu + 0.5 * d) * std::pow(4.0 * M_PI, 0.5 * d));
  return -std::log(xi2) / sigma0 * std::sqrt(ratio);
}

void HyperPriorSpec::validate() const {
  switch (variant) {
    case Variant::PcMatern:
      if (!(xi1 > 0.0 && xi1 < 1.0 && xi2 > 0.0 && xi2 < 1.0 && rho0 > 0.0 && sigma0 > 0.0))
        throw std::invalid_argument("PC prior: xi in (0,1), rho0 > 0, sigma0 > 0 required");
      break;
    case Variant::PcIcar:
      if (!(xi2 > 0.0 && xi2 < 1.0 && sigma0 > 0.0 && variance_constant > 0.0))
        throw std::invalid_argument("PC prior: xi2 in (0,1), sigma0 > 0, variance constant > 0 required");
      break;
    case Variant::LogNormalM1:
      if (!(sigma_tau0 > 0.0 && sigma_kappa0 > 0.0))
        throw std::invalid_argument("log-normal prior: positive scales required");
      break;
    case Variant::GammaTau2:
      if (!(q1 > 0.0 && q2 > 0.0)) throw std::invalid_argument("gamma prior: q1, q2 > 0 required");
      break;
    case Variant::None:
      break;
  }
  if (!(sigma_h2 > 0.0)) throw std::invalid_argument("anisotropy prior: sigma_h2 > 0 required");
}

double SpatialPriorSpec::alpha() const {
  switch (kind) {
    case PriorKind::GS: return 0.0;
    case PriorKind::ICAR1:
    case PriorKind::M1: return 1.0;
    default: return 2.0;
  }
}

double SpatialPriorSpec::nu(int d) const { return alpha() - 0.5 * d; }

void SpatialPriorSpec::validate() const {
  if (!(tau2 > 0.0)) throw std::invalid_argument("spatial prior: tau2 must be positive");
  const bool icar = kind == PriorKind::ICAR1 || kind == PriorKind::ICAR2;
  if (icar && kappa2 != 0.0) throw std::invalid_argument("ICAR priors require kappa2 = 0");
  if (has_kappa() && !(kappa2 > 0.0))
    throw std::invalid_argument("Matern priors require kappa2 > 0");
  if (anisotropic() && !(hx > 0.0 && hy > 0.0))
    throw std::invalid_argument("anisotropic prior requires hx, hy > 0");
  hyper.validate();
}

SpatialPriorSpec SpatialPriorSpec::gs(double tau2) {
  SpatialPriorSpec s;
  s.kind = PriorKind::GS;
  s.tau2 = tau2;
  s.hyper.variant = HyperPriorSpec::Variant::None;
  return s;
}

HyperPriorEval hyperprior_eval(const SpatialPriorSpec& spec) {
  spec.validate();
  const int d = 3;
  const double tau0 = std::log(spec.tau2);
  HyperPriorEval ev;
  switch (spec.hyper.variant) {
    case HyperPriorSpec::Variant::PcMatern: {
      const double nu = spec.nu(d);
      if (!(nu > 0.0)) throw std::domain_error("PC Matern prior undefined for nu <= 0");
      const double kappa0 = std::log(spec.kappa2);
      const double l1 = spec.hyper.lambda1(nu, d);
      const double l3 = spec.hyper.lambda3(nu, d);
      const double e1 = std::exp(0.25 * d * kappa0);                  // kappa^{d/2}
      const double e3 = std::exp(-0.5 * nu * kappa0 - 0.5 * tau0);    // kappa^{-nu} tau^{-1}
      ev.log_density = -1.5 * tau0 + (0.5 * d - 1.0 - nu) * 0.5 * kappa0 - l1 * e1 - l3 * e3;
      ev.d_tau0 = -1.5 + 0.5 * l3 * e3;
      ev.d2_tau0 = -0.25 * l3 * e3;
      ev.d_kappa0 = 0.5 * (0.5 * d - 1.0 - nu) - 0.25 * d * l1 * e1 + 0.5 * nu * l3 * e3;
      ev.d2_kappa0 = -0.0625 * d * d * l1 * e1 - 0.25 * nu * nu * l3 * e3;
      break;
    }
    case HyperPriorSpec::Variant::LogNormalM1: {
      const double kappa0 = std::log(spec.kappa2);
      const double vt = spec.hyper.sigma_tau0 * spec.hyper.sigma_tau0;
      const double vk = spec.hyper.sigma_kappa0 * spec.hyper.sigma_kappa0;
      const double dt = tau0 - spec.hyper.mu_tau0;
      const double dk = kappa0 - spec.hyper.mu_kappa0;
      ev.log_density = -0.5 * dt * dt / vt - 0.5 * dk * dk / vk;
      ev.d_tau0 = -dt / vt;
      ev.d2_tau0 = -1.0 / vt;
      ev.d_kappa0 = -dk / vk;
      ev.d2_kappa0 = -1.0 / vk;
      break;
    }
    case HyperPriorSpec::Variant::PcIcar: {
      const double l2 = spec.hyper.lambda2();
      const double e = std::exp(-0.5 * tau0);  // tau^{-1}
      ev.log_density = std::log(0.5 * l2) - 1.5 * tau0 - l2 * e;
      ev.d_tau0 = -1.5 + 0.5 * l2 * e;
      ev.d2_tau0 = -0.25 * l2 * e;
      break;
    }
    case HyperPriorSpec::Variant::GammaTau2: {
      // density proportional to x^{q2-1} exp(-x/q1)
      ev.log_density = (spec.hyper.q2 - 1.0) * tau0 - spec.tau2 / spec.hyper.q1;
      ev.d_tau0 = (spec.hyper.q2 - 1.0) - spec.tau2 / spec.hyper.q1;
      ev.d2_tau0 = -spec.tau2 / spec.hyper.q1;
      break;
    }
    case HyperPriorSpec::Variant::None:
      break;
  }
  if (spec.anisotropic()) {
    // [log hx, log hy] ~ N(0, sigma_h^2 [1 -1/2; -1/2 1]); the precision is
    // (4 / (3 sigma_h^2)) [1 1/2; 1/2 1].
    const double h0x = std::log(spec.hx);
    const double h0y = std::log(spec.hy);
    const double s = 1.0 / (3.0 * spec.hyper.sigma_h2);
    ev.log_density += -2.0 * s * (h0x * h0x + h0x * h0y + h0y * h0y);
    ev.d_h0x = -2.0 * s * (2.0 * h0x + h0y);
    ev.d_h0y = -2.0 * s * (2.0 * h0y + h0x);
    ev.d2_h0x = -4.0 * s;
    ev.d2_h0y = -4.0 * s;
  }
  return ev;
}

SigmaRho sigma_rho(double tau2, double kappa2, double alpha, int d) {
  const double nu = alpha - 0.5 * d;
  if (!(nu > 0.0) || !(kappa2 > 0.0))
    throw std::domain_error("sigma_rho: undefined for this kind (needs nu > 0 and kappa > 0)");
  const double kappa = std::sqrt(kappa2);
  SigmaRho out;
  out.sigma2 = std::tgamma(nu) /
               (std::tgamma(nu + 0.5 * d) * std::pow(4.0 * M_PI, 0.5 * d) * tau2 * std::pow(kappa, 2.0 * nu));
  out.rho = std::sqrt(8.0 * nu) / kappa;
  return out;
}

double tau2_for_sigma(double sigma, double kappa2, double alpha, int d) {
  const double nu = alpha - 0.5 * d;
  if (!(nu > 0.0) || !(kappa2 > 0.0) || !(sigma > 0.0))
    throw std::domain_error("tau2_for_sigma: needs nu > 0, kappa > 0, sigma > 0");
  const double kappa = std::sqrt(kappa2);
  return std::tgamma(nu) /
         (std::tgamma(nu + 0.5 * d) * std::pow(4.0 * M_PI, 0.5 * d) * sigma * sigma * std::pow(kappa, 2.0 * nu));
}

PrecisionOperator::PrecisionOperator(const SpatialPriorSpec& spec, const MaskedLattice& lattice,
                                     const GraphSet& graphs)
    : spec_(spec), lattice_(&lattice), graphs_(&graphs), n_(lattice.n) {
  spec_.validate();
  const bool icar = spec_.kind == PriorKind::ICAR1 || spec_.kind == PriorKind::ICAR2;
  nullity_ = icar ? graphs.n_components : 0;
  component_size_.assign(static_cast<std::size_t>(graphs.n_components), 0);
  for (int c : graphs.components) ++component_size_[static_cast<std::size_t>(c)];
  rebuild();
}

void PrecisionOperator::set_hyper(double tau2, double kappa2, double hx, double hy) {
  spec_.tau2 = tau2;
  spec_.kappa2 = kappa2;
  spec_.hx = hx;
  spec_.hy = hy;
  spec_.validate();
  rebuild();
}

void PrecisionOperator::rebuild() {
  switch (spec_.kind) {
    case PriorKind::M1:
    case PriorKind::M2:
      k_ = graphs_->g.matrix;
      for (Eigen::Index i = 0; i < n_; ++i) k_.coeffRef(i, i) += spec_.kappa2;
      break;
    case PriorKind::AM2: {
      const double hz = this->hz();
      k_ = (spec_.hx * graphs_->gx.matrix + spec_.hy * graphs_->gy.matrix + hz * graphs_->gz.matrix)
               .pruned(0.0);
      // Diagonal entries exist in every axis operator, so the sum keeps them.
      for (Eigen::Index i = 0; i < n_; ++i) k_.coeffRef(i, i) += spec_.kappa2;
      break;
    }
    default:
      k_.resize(0, 0);
      break;
  }
  if (k_.size() > 0) k_.makeCompressed();
}

void PrecisionOperator::apply_core(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   Eigen::Ref<Eigen::VectorXd> y) const {
  switch (spec_.kind) {
    case PriorKind::GS: y = x; break;
    case PriorKind::ICAR1:
    case PriorKind::ICAR2: y = graphs_->g.matrix * x; break;
    default: y = k_ * x; break;
  }
}

Eigen::VectorXd PrecisionOperator::apply_core(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd y(n_);
  apply_core(x, y);
  return y;
}

void PrecisionOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& x,
                              Eigen::Ref<Eigen::VectorXd> y) const {
  if (x.size() != n_) throw std::invalid_argument("PrecisionOperator::apply: dimension mismatch");
  switch (spec_.kind) {
    case PriorKind::GS:
      y = spec_.tau2 * x;
      break;
    case PriorKind::ICAR1:
      y = spec_.tau2 * (graphs_->g.matrix * x);
      break;
    case PriorKind::M1:
      y = spec_.tau2 * (k_ * x);
      break;
    case PriorKind::ICAR2:
      y = spec_.tau2 * (graphs_->g.matrix * (graphs_->g.matrix * x).eval());
      break;
    case PriorKind::M2:
    case PriorKind::AM2:
      y = spec_.tau2 * (k_ * (k_ * x).eval());
      break;
  }
}

Eigen::VectorXd PrecisionOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd y(n_);
  apply(x, y);
  return y;
}

Eigen::VectorXd PrecisionOperator::apply_dk_dh(int axis, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (spec_.kind != PriorKind::AM2) throw std::logic_error("apply_dk_dh: AM2 only");
  const double hz = this->hz();
  if (axis == 0) return spec_.hx * (graphs_->gx.matrix * x) - hz * (graphs_->gz.matrix * x);
  return spec_.hy * (graphs_->gy.matrix * x) - hz * (graphs_->gz.matrix * x);
}

Eigen::VectorXd PrecisionOperator::apply_d2k_dh2(int axis, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (spec_.kind != PriorKind::AM2) throw std::logic_error("apply_d2k_dh2: AM2 only");
  const double hz = this->hz();
  if (axis == 0) return spec_.hx * (graphs_->gx.matrix * x) + hz * (graphs_->gz.matrix * x);
  return spec_.hy * (graphs_->gy.matrix * x) + hz * (graphs_->gz.matrix * x);
}

namespace {

Eigen::VectorXd row_squared_norms(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m.rows());
  for (Eigen::Index i = 0; i < m.outerSize(); ++i)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, i); it; ++it)
      out[i] += it.value() * it.value();
  return out;
}

}  // namespace

Eigen::VectorXd PrecisionOperator::diagonal() const {
  switch (spec_.kind) {
    case PriorKind::GS:
      return Eigen::VectorXd::Constant(n_, spec_.tau2);
    case PriorKind::ICAR1:
      return spec_.tau2 * graphs_->g.matrix.diagonal();
    case PriorKind::M1:
      return spec_.tau2 * k_.diagonal();
    case PriorKind::ICAR2:
      return spec_.tau2 * row_squared_norms(graphs_->g.matrix);
    default:
      return spec_.tau2 * row_squared_norms(k_);
  }
}

const Eigen::SparseMatrix<double, Eigen::RowMajor>* PrecisionOperator::core_matrix() const {
  switch (spec_.kind) {
    case PriorKind::GS: return nullptr;
    case PriorKind::ICAR1:
    case PriorKind::ICAR2: return &graphs_->g.matrix;
    default: return &k_;
  }
}

void PrecisionOperator::add_sqrt_noise(Rng& rng, Eigen::Ref<Eigen::VectorXd> y) const {
  const double tau = std::sqrt(spec_.tau2);
  switch (spec_.kind) {
    case PriorKind::GS: {
      for (Eigen::Index i = 0; i < n_; ++i) y[i] += tau * rng.normal();
      break;
    }
    case PriorKind::M2:
    case PriorKind::AM2: {
      Eigen::VectorXd z(n_);
      for (Eigen::Index i = 0; i < n_; ++i) z[i] = rng.normal();
      y += tau * (k_ * z);  // K symmetric, so (tau K) is its own transpose
      break;
    }
    case PriorKind::ICAR2: {
      Eigen::VectorXd z(n_);
      for (Eigen::Index i = 0; i < n_; ++i) z[i] = rng.normal();
      y += tau * (graphs_->g.matrix * z);
      break;
    }
    case PriorKind::M1: {
      // kappa^2 I + G = kappa^2 I + D' D with D the edge incidence matrix.
      const double kappa = std::sqrt(spec_.kappa2);
      for (Eigen::Index i = 0; i < n_; ++i) y[i] += tau * kappa * rng.normal();
      for (const auto& e : graphs_->edges) {
        const double z = rng.normal();
        y[e[0]] += tau * z;
        y[e[1]] -= tau * z;
      }
      break;
    }
    case PriorKind::ICAR1: {
      for (const auto& e : graphs_->edges) {
        const double z = rng.normal();
        y[e[0]] += tau * z;
        y[e[1]] -= tau * z;
      }
      break;
    }
  }
}

void PrecisionOperator::deflate(Eigen::Ref<Eigen::VectorXd> x) const {
  if (nullity_ == 0) return;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(graphs_->n_components);
  for (Eigen::Index i = 0; i < n_; ++i) mean[graphs_->components[static_cast<std::size_t>(i)]] += x[i];
  for (int c = 0; c < graphs_->n_components; ++c) mean[c] /= static_cast<double>(component_size_[static_cast<std::size_t>(c)]);
  for (Eigen::Index i = 0; i < n_; ++i) x[i] -= mean[graphs_->components[static_cast<std::size_t>(i)]];
}

Eigen::VectorXd sample_prior(const SpatialPriorSpec& spec, const MaskedLattice& lattice,
                             const GraphSet& graphs, Rng& rng, double pcg_tol) {
  PrecisionOperator op(spec, lattice, graphs);
  const Eigen::Index n = lattice.n;
  const double tau = std::sqrt(spec.tau2);
  Eigen::VectorXd z(n);

  switch (spec.kind) {
    case PriorKind::GS: {
      for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal() / tau;
      return z;
    }
    case PriorKind::M1: {
      // u = tau^{-1} L^{-T} z with K = L L', so Cov(u) = (tau^2 K)^{-1}.
      for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
      Eigen::SparseMatrix<double> k_col = *op.core_matrix();
      Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(k_col);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("sample_prior: sparse Cholesky factorization failed");
      // K = P' L L' P; solve L' P u' = z, then undo the permutation.
      Eigen::VectorXd w = llt.matrixU().solve(z);
      Eigen::VectorXd u = llt.permutationPinv() * w;
      return u / tau;
    }
    case PriorKind::M2:
    case PriorKind::AM2: {
      for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
      Eigen::VectorXd diag = op.core_matrix()->diagonal();
      PcgOptions opts;
      opts.tol = pcg_tol;
      opts.jacobi = &diag;
      auto apply = [&](const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y) {
        y = *op.core_matrix() * x;
      };
      return pcg_solve(apply, z, opts).x / tau;
    }
    case PriorKind::ICAR1:
    case PriorKind::ICAR2: {
      // Draw b with Cov = G (incidence noise) or project white noise for the
      // squared operator, then apply the deflated pseudo-inverse of G.
      Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
      if (spec.kind == PriorKind::ICAR1) {
        for (const auto& e : graphs.edges) {
          const double w = rng.normal();
          b[e[0]] += w;
          b[e[1]] -= w;
        }
      } else {
        for (Eigen::Index i = 0; i < n; ++i) b[i] = rng.normal();
        op.deflate(b);
      }
      Eigen::VectorXd diag = graphs.g.matrix.diagonal().cwiseMax(1.0);
      PcgOptions opts;
      opts.tol = pcg_tol;
      opts.jacobi = &diag;
      auto apply = [&](const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y) {
        y = graphs.g.matrix * x;
      };
      Eigen::VectorXd u = pcg_solve(apply, b, opts).x;
      op.deflate(u);
      return u / tau;
    }
  }
  throw std::logic_error("sample_prior: unreachable");
}

double icar_variance_constant(const MaskedLattice& lattice, const GraphSet& graphs, PriorKind kind,
                              int n_sim, std::uint64_t seed) {
  if (kind != PriorKind::ICAR1 && kind != PriorKind::ICAR2)
    throw std::invalid_argument("icar_variance_constant: ICAR kinds only");
  SpatialPriorSpec spec;
  spec.kind = kind;
  spec.tau2 = 1.0;
  spec.kappa2 = 0.0;
  spec.hyper.variant = HyperPriorSpec::Variant::None;
  double acc = 0.0;
  for (int s = 0; s < n_sim; ++s) {
    Rng rng = Rng(seed).child(0x69636172ull, static_cast<std::uint64_t>(s));
    acc += sample_prior(spec, lattice, graphs, rng).squaredNorm();
  }
  return acc / (static_cast<double>(n_sim) * static_cast<double>(lattice.n));
}

namespace {

/// Gauss-Legendre nodes/weights on (-1, 1) by Newton iteration.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(static_cast<std::size_t>(n));
  weights.resize(static_cast<std::size_t>(n));
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[static_cast<std::size_t>(i)] = -x;
    nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    weights[static_cast<std::size_t>(i)] = w;
    weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
}

double spectral_integral(double alpha, double kappa, double tau, const std::array<double, 3>& h,
                         int n) {
  // Spherical product rule: omega = r (sin t cos p, sin t sin p, cos t).
  // The radial leg uses r = kappa tan(v), which compactifies [0, inf) with a
  // smooth mapped integrand; mu = cos(t) uses Gauss-Legendre and p the
  // (spectrally accurate) periodic trapezoid rule.
  std::vector<double> mu, wmu, xv, wv;
  gauss_legendre(n, mu, wmu);
  gauss_legendre(2 * n, xv, wv);
  const int n_phi = 2 * n;
  const double k2 = kappa * kappa;
  const double norm = 1.0 / (std::pow(2.0 * M_PI, 3.0) * tau * tau);

  // Radial nodes shared across directions: v in (0, pi/2).
  std::vector<double> r2(xv.size()), jac(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = 0.25 * M_PI * (xv[i] + 1.0);
    const double t = std::tan(v);
    const double r = kappa * t;
    r2[i] = r * r;
    jac[i] = 0.25 * M_PI * wv[i] * kappa * (1.0 + t * t) * r * r;  // dr * r^2
  }

  double acc = 0.0;
  for (std::size_t a = 0; a < mu.size(); ++a) {
    const double m2 = mu[a] * mu[a];
    const double s2 = 1.0 - m2;
    for (int b = 0; b < n_phi; ++b) {
      const double phi = 2.0 * M_PI * (b + 0.5) / n_phi;
      const double c = std::cos(phi), s = std::sin(phi);
      const double g = h[0] * s2 * c * c + h[1] * s2 * s * s + h[2] * m2;
      double radial = 0.0;
      for (std::size_t i = 0; i < r2.size(); ++i)
        radial += jac[i] / std::pow(k2 + g * r2[i], alpha);
      acc += wmu[a] * (2.0 * M_PI / n_phi) * radial;
    }
  }
  return norm * acc;
}

}  // namespace

double spectral_variance_quadrature(double alpha, double kappa, double tau,
                                    const std::array<double, 3>& h_diag, int points_per_axis) {
  if (!(alpha > 1.5)) throw std::domain_error("spectral_variance_quadrature: needs alpha > d/2");
  if (!(kappa > 0.0 && tau > 0.0))
    throw std::domain_error("spectral_variance_quadrature: needs kappa, tau > 0");
  const double coarse = spectral_integral(alpha, kappa, tau, h_diag, points_per_axis / 2);
  const double fine = spectral_integral(alpha, kappa, tau, h_diag, points_per_axis);
  if (std::abs(fine - coarse) > 1e-5 * std::abs(fine)) {
    const double finer = spectral_integral(alpha, kappa, tau, h_diag, 2 * points_per_axis);
    if (std::abs(finer - fine) > 1e-5 * std::abs(finer))
      throw std::runtime_error("spectral_variance_quadrature: quadrature did not converge");
    return finer;
  }
  return fine;
}

}  // namespace ebgmrf
