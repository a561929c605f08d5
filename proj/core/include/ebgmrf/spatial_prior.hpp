#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <array>
#include <string>

#include "ebgmrf/lattice.hpp"
#include "ebgmrf/rng.hpp"

namespace ebgmrf {

enum class PriorKind { GS, ICAR1, M1, ICAR2, M2, AM2 };

std::string prior_kind_name(PriorKind kind);
PriorKind prior_kind_from_name(const std::string& name);

/// Hyperprior on the spatial coordinates, evaluated in the reparameterized
/// coordinates tau0 = log(tau^2), kappa0 = log(kappa^2), h0 = log(h).
struct HyperPriorSpec {
  enum class Variant { PcMatern, LogNormalM1, PcIcar, GammaTau2, None };
  Variant variant = Variant::None;

  // PcMatern: Pr(rho < rho0) = xi1, Pr(sigma^2 > sigma0^2) = xi2.
  double xi1 = 0.05;
  double rho0 = 2.0;  // voxel lengths
  double xi2 = 0.05;
  double sigma0 = 1.0;

  // LogNormalM1.
  double mu_tau0 = std::log(0.01);
  double sigma_tau0 = 4.0;
  double mu_kappa0 = std::log(0.1);
  double sigma_kappa0 = 1.0;

  // PcIcar: sigma_bar^2 = variance_constant / tau^2 at tau^2 = 1.
  double variance_constant = 1.0 / 6.0;

  // GammaTau2: density proportional to x^(q2-1) exp(-x/q1) (scale q1, shape q2).
  double q1 = 10.0;
  double q2 = 0.1;

  // Log-normal anisotropy prior, correlation -1/2 between log hx and log hy.
  double sigma_h2 = 0.01;

  double lambda1(double nu, int d = 3) const;
  double lambda2() const;
  double lambda3(double nu, int d = 3) const;
  void validate() const;
};

struct SpatialPriorSpec {
  PriorKind kind = PriorKind::GS;
  double tau2 = 1e-12;
  double kappa2 = 0.0;
  double hx = 1.0;
  double hy = 1.0;
  HyperPriorSpec hyper;
  bool optimize_tau2 = false;
  bool optimize_kappa2 = false;
  bool optimize_h = false;

  double alpha() const;      // SPDE order; 0 for GS
  double nu(int d = 3) const;
  bool has_kappa() const { return kind == PriorKind::M1 || kind == PriorKind::M2 || kind == PriorKind::AM2; }
  bool anisotropic() const { return kind == PriorKind::AM2; }
  void validate() const;

  static SpatialPriorSpec gs(double tau2 = 1e-12);
};

/// Log hyperprior value with first and second derivatives per reparameterized
/// coordinate. Coordinates not present in the variant are zero.
struct HyperPriorEval {
  double log_density = 0.0;
  double d_tau0 = 0.0, d2_tau0 = 0.0;
  double d_kappa0 = 0.0, d2_kappa0 = 0.0;
  double d_h0x = 0.0, d2_h0x = 0.0;
  double d_h0y = 0.0, d2_h0y = 0.0;
};

HyperPriorEval hyperprior_eval(const SpatialPriorSpec& spec);

/// Marginal variance and range (in voxel units) of the Matern field,
/// sigma^2 = Gamma(nu) / (Gamma(nu+d/2) (4 pi)^(d/2) tau^2 kappa^(2 nu)),
/// rho = sqrt(8 nu) / kappa. Defined only for nu > 0 and kappa > 0.
struct SigmaRho {
  double sigma2;
  double rho;
};
SigmaRho sigma_rho(double tau2, double kappa2, double alpha, int d = 3);

/// Invert sigma_rho: tau^2 that produces a target sigma at given kappa.
double tau2_for_sigma(double sigma, double kappa2, double alpha, int d = 3);

/// Matrix-free application of the Table 1 precision Q_k and of its core
/// factor K. Immutable between set_hyper() calls.
class PrecisionOperator {
 public:
  PrecisionOperator(const SpatialPriorSpec& spec, const MaskedLattice& lattice, const GraphSet& graphs);

  void set_hyper(double tau2, double kappa2, double hx, double hy);

  PriorKind kind() const { return spec_.kind; }
  const SpatialPriorSpec& spec() const { return spec_; }
  double tau2() const { return spec_.tau2; }
  double kappa2() const { return spec_.kappa2; }
  double hx() const { return spec_.hx; }
  double hy() const { return spec_.hy; }
  double hz() const { return 1.0 / (spec_.hx * spec_.hy); }
  int nullity() const { return nullity_; }
  Eigen::Index dim() const { return n_; }
  const GraphSet& graphs() const { return *graphs_; }

  /// y = Q_k x (two K products for alpha = 2; never materializes K^T K).
  void apply(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y) const;
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// y = K x for M kinds (K = kappa^2 I + G or its anisotropic variant),
  /// y = G x for ICAR kinds, y = x for GS.
  void apply_core(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y) const;
  Eigen::VectorXd apply_core(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// dK/dh0x and dK/dh0y (AM2 only), and their second derivatives.
  Eigen::VectorXd apply_dk_dh(int axis, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd apply_d2k_dh2(int axis, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Exact diag(Q_k), assembly-free.
  Eigen::VectorXd diagonal() const;

  /// The assembled sparse core K (M kinds) or G (ICAR); identity-free for GS.
  const Eigen::SparseMatrix<double, Eigen::RowMajor>* core_matrix() const;

  /// Adds a draw with covariance Q_k to y (square-root action on white noise).
  void add_sqrt_noise(Rng& rng, Eigen::Ref<Eigen::VectorXd> y) const;

  /// Projects out the per-component constant nullspace (ICAR kinds); no-op otherwise.
  void deflate(Eigen::Ref<Eigen::VectorXd> x) const;

 private:
  SpatialPriorSpec spec_;
  const MaskedLattice* lattice_;
  const GraphSet* graphs_;
  Eigen::Index n_ = 0;
  int nullity_ = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> k_;  // cached core for M kinds
  std::vector<std::int64_t> component_size_;

  void rebuild();
};

/// One draw from N(0, Q_k^{-1}); ICAR kinds are drawn in the orthogonal
/// complement of the nullspace.
Eigen::VectorXd sample_prior(const SpatialPriorSpec& spec, const MaskedLattice& lattice,
                             const GraphSet& graphs, Rng& rng, double pcg_tol = 1e-10);

/// Monte Carlo mean over voxels of the nullspace-conditioned marginal
/// variance at tau^2 = 1, so that sigma_bar^2 = c / tau^2.
double icar_variance_constant(const MaskedLattice& lattice, const GraphSet& graphs, PriorKind kind,
                              int n_sim, std::uint64_t seed);

/// Numerical quadrature of the SPDE spectral density over R^d (d = 3) at lag
/// zero; h_diag scales the quadratic form in the denominator.
double spectral_variance_quadrature(double alpha, double kappa, double tau,
                                    const std::array<double, 3>& h_diag, int points_per_axis = 96);

}  // namespace ebgmrf
