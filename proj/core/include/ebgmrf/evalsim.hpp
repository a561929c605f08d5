#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "ebgmrf/eb.hpp"
#include "ebgmrf/glm.hpp"
#include "ebgmrf/lattice.hpp"
#include "ebgmrf/spatial_prior.hpp"
#include "ebgmrf/system.hpp"

namespace ebgmrf {

/// Synthetic-data generation: activity fields drawn from their spatial
/// priors with true hyperparameters, AR(P) noise per voxel, constant
/// intercept field unless one is supplied.
struct SimulationSpec {
  std::vector<SpatialPriorSpec> conditions;      // priors with true hyperparameters
  Eigen::MatrixXd design;                        // T x K, activity columns first
  std::vector<int> activity_columns;             // indices into design for the conditions
  double intercept_level = 100.0;
  std::optional<Eigen::VectorXd> intercept_field;  // per voxel, overrides the level
  int intercept_column = -1;                     // -1: last column
  Eigen::VectorXd ar_coef;                       // shared AR coefficients (P)
  double lambda = 1.0;                           // shared innovation precision
  bool noise_enabled = true;
  std::uint64_t seed = 0;
};

struct SimulatedData {
  Dataset dataset;
  Eigen::MatrixXd w_true;  // K x N
};

SimulatedData simulate_dataset(const SimulationSpec& spec, const MaskedLattice& lattice,
                               const GraphSet& graphs);

struct CvPlan {
  double leave_out_pct = 90.0;  // d% of voxels dropped per split
  int n_splits = 50;
  std::uint64_t seed = 0;
  double u = 0.05;     // interval score coverage parameter
  int n_rbmc = 100;    // draws for the predictive variance
  double pcg_tol = 1e-8;
};

struct ScoreReport {
  double mae = 0.0, rmse = 0.0, crps = 0.0, ign = 0.0, interval = 0.0;
};

/// Two-stage cross-validation errors of supplement-style construction: the
/// left-out voxels' likelihood blocks are zeroed before the conditional mean
/// solve, then nuisance regressors are refitted per voxel on the residual.
struct CvErrors {
  std::vector<Eigen::Index> left_out;  // voxel indices in D
  Eigen::MatrixXd errors;              // T x |D|
  Eigen::MatrixXd variance;            // T x |D| predictive variances
};

CvErrors cv_errors(const Dataset& dataset, const LaggedStats& stats, const NoiseState& noise,
                   const std::vector<SpatialPriorSpec>& specs, const MaskedLattice& lattice,
                   const GraphSet& graphs, const std::vector<Eigen::Index>& left_out,
                   const CvPlan& plan);

/// Gaussian predictive variance for E^CV entries: AR stationary variance plus
/// the activity-design quadratic form in the RBMC covariance of the zeroed
/// system.
double predictive_variance(double ar_variance, const Eigen::Ref<const Eigen::VectorXd>& x_act_row,
                           const Eigen::Ref<const Eigen::MatrixXd>& w_act_cov);

/// Negatively oriented proper scores for centered Gaussian predictives.
double crps_normal(double x, double mu, double sigma);
double ign_normal(double x, double mu, double sigma);
double interval_score_normal(double x, double mu, double sigma, double u = 0.05);

ScoreReport proper_scores(const Eigen::Ref<const Eigen::MatrixXd>& errors,
                          const Eigen::Ref<const Eigen::MatrixXd>& variances, double u = 0.05);

/// Random voxel subset of size round(d% of N).
std::vector<Eigen::Index> draw_left_out(Eigen::Index n, double pct, std::uint64_t seed, int split);

/// Fits with theta held fixed, runs the plan's splits and reports one
/// ScoreReport per split.
std::vector<ScoreReport> run_cv(const Dataset& dataset, const LaggedStats& stats,
                                const NoiseState& noise, const std::vector<SpatialPriorSpec>& specs,
                                const MaskedLattice& lattice, const GraphSet& graphs,
                                const CvPlan& plan);

/// Tiny conjugate Gibbs reference for the EB method: ICAR1 spatial prior with
/// a Gamma(q1, q2) hyperprior on tau^2, P = 0, dense exact draws.
struct GibbsConfig {
  int iterations = 2000;
  int burnin = 500;
  std::uint64_t seed = 0;
  bool prior_only = false;  // no-data run, conjugacy sanity check
};

struct GibbsResult {
  Eigen::VectorXd beta_mean;  // K N
  Eigen::VectorXd beta_sd;    // K N
  std::vector<double> tau2_chain;
  double tau2_mean = 0.0;
};

GibbsResult gibbs_oracle(const Dataset& dataset, const LaggedStats& stats,
                         const SpatialPriorSpec& icar_spec, int activity_regressor,
                         const std::vector<SpatialPriorSpec>& all_specs,
                         const MaskedLattice& lattice, const GraphSet& graphs,
                         const NoisePriorSpec& noise_prior, const GibbsConfig& config);

}  // namespace ebgmrf
