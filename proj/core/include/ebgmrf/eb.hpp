#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ebgmrf/glm.hpp"
#include "ebgmrf/spatial_prior.hpp"
#include "ebgmrf/system.hpp"

namespace ebgmrf {

struct NoisePriorSpec {
  double u1 = 10.0;      // gamma scale for lambda
  double u2 = 0.1;       // gamma shape for lambda
  double tau_a2 = 1e-3;  // A_{p,n} ~ N(0, 1/tau_a2)
};

/// All optimized parameters in unconstrained coordinates:
/// tau0 = log tau^2, kappa0 = log kappa^2, h0 = log h,
/// lambda0 = log lambda, a0 = log((1+A)/2) - log((1-A)/2).
struct HyperState {
  struct SpatialCoords {
    double tau0 = 0.0, kappa0 = 0.0, h0x = 0.0, h0y = 0.0;
  };
  std::vector<SpatialCoords> spatial;  // one per regressor
  Eigen::VectorXd lambda0;             // N
  Eigen::MatrixXd a0;                  // P x N
};

inline double a0_from_a(double a) { return std::log((1.0 + a) / 2.0) - std::log((1.0 - a) / 2.0); }
inline double a_from_a0(double a0) { return std::tanh(0.5 * a0); }
/// dA/dA0, the chain-rule factor for the logit reparameterization.
inline double a_chain(double a) { return 0.5 * (1.0 - a * a); }

HyperState state_from(const std::vector<SpatialPriorSpec>& specs, const NoiseState& noise);
void state_to(const HyperState& state, std::vector<SpatialPriorSpec>& specs, NoiseState& noise);

/// Sets tau2/kappa2 (and h) to the hyperprior medians (means where a median
/// is awkward), the optimizer's default starting point.
void init_spatial_from_hyperprior(SpatialPriorSpec& spec);

/// Least-squares pre-estimate of the noise model without any spatial prior.
NoiseState init_noise(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int p,
                      double lambda_ceiling = 1e12, double a_clip = 0.99);

struct SpatialCoordId {
  enum class Kind { Tau0, Kappa0, H0x, H0y };
  int regressor = 0;
  Kind kind = Kind::Tau0;
  std::string name() const;
};

std::vector<SpatialCoordId> enumerate_spatial_coords(const std::vector<SpatialPriorSpec>& specs);

struct EbTraceOptions {
  bool exact = false;  // dense-oracle traces instead of Hutchinson
  int n_probes = 50;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;  // tags the probe streams
  double pcg_tol = 1e-8;
  int pcg_max_iter = 2000;
  const Eigen::VectorXd* mu_warm = nullptr;
};

struct GradientReport {
  std::vector<SpatialCoordId> coords;
  Eigen::VectorXd grad;          // per spatial coordinate
  Eigen::VectorXd hess;          // approximate Hessian per spatial coordinate
  Eigen::VectorXd grad_lambda0;  // N
  Eigen::MatrixXd grad_a0;       // P x N
  Eigen::VectorXd mu;            // posterior mean used for the estimates (K N)
};

/// Gradient of the Eq.(12)-style log marginal posterior in reparameterized
/// coordinates, plus the conditional-expectation approximate Hessian for the
/// spatial coordinates. Trace terms are Hutchinson estimates or dense-oracle
/// exact values depending on the options.
GradientReport grad_log_marginal_posterior(const LaggedStats& stats,
                                           const std::vector<SpatialPriorSpec>& specs,
                                           const NoiseState& noise, const MaskedLattice& lattice,
                                           const GraphSet& graphs, const NoisePriorSpec& noise_prior,
                                           const EbTraceOptions& opts,
                                           const std::vector<std::uint8_t>* zero_voxels = nullptr);

struct OptimizerConfig {
  int n_iter = 200;
  double gamma1 = 0.2;   // gradient averaging
  double gamma2 = 0.9;   // Hessian averaging
  double eta_mom = 0.5;  // momentum
  double eta_n = 1e-3;   // noise-coordinate rate
  int n_polyak = 10;
  int n_probes = 50;
  int warmup = 5;
  double eta0 = 0.9;           // eta(j) = eta0 / (eta_decay * max(0, j - decay_start) + 1)
  double eta_decay = 0.1;
  int decay_start = 100;
  double pcg_tol = 1e-8;
  int pcg_max_iter = 2000;
  bool exact_traces = false;
  std::uint64_t seed = 0;
  bool momentum = true;      // disabled for the deterministic-surrogate tests
  double hessian_floor = 1e-12;
};

inline double learning_rate(const OptimizerConfig& c, int j) {
  return c.eta0 / (c.eta_decay * std::max(0, j - c.decay_start) + 1.0);
}

struct DiagnosticsRow {
  int iteration;
  std::string coordinate;
  double value, gradient, step;
};

struct FitResult {
  std::vector<SpatialPriorSpec> specs;  // hyperparameters at the Polyak average
  NoiseState noise;
  HyperState state;
  std::vector<DiagnosticsRow> diagnostics;
};

FitResult run_optimizer(const LaggedStats& stats, std::vector<SpatialPriorSpec> specs,
                        NoiseState noise, const MaskedLattice& lattice, const GraphSet& graphs,
                        const NoisePriorSpec& noise_prior, const OptimizerConfig& config);

}  // namespace ebgmrf
