#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ebgmrf/lattice.hpp"

namespace ebgmrf {

struct Dataset {
  Eigen::MatrixXd y;  // T x N observations
  Eigen::MatrixXd x;  // T x K design
  std::vector<int> activity_set;   // 0-based design columns with spatial priors
  std::vector<int> nuisance_set;   // complement
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  double global_mean_signal = 0.0;  // mean of y over mask and time

  Eigen::Index t() const { return y.rows(); }
  Eigen::Index n() const { return y.cols(); }
  Eigen::Index k() const { return x.cols(); }
  void validate(int noise_order) const;
  void compute_global_mean();
};

/// Precomputed lag tensors; every per-iteration quantity of the AR(P)
/// likelihood is a contraction of these, with no sums over T left.
struct LaggedStats {
  int t = 0, k = 0, p = 0;
  Eigen::MatrixXd xtx;   // K x K over the usable window (rows P+1..T)
  Eigen::MatrixXd ytx;   // N x K, per-voxel Y'X over the window
  Eigen::VectorXd yty;   // per voxel

  // P > 0 only. xlag[q](t, :) is the design row lagged by q+1;
  // d[n](q, t) is the observation lagged by q+1.
  std::vector<Eigen::MatrixXd> xlag;            // P of (T-P) x K
  std::vector<Eigen::MatrixXd> d;               // N of P x (T-P)
  std::vector<Eigen::MatrixXd> b;               // N of P x K,   B_n = Y' Xlag + d_n X
  std::vector<Eigen::MatrixXd> r;               // P of K x K,   R_p = X' Xlag_p
  std::vector<std::vector<Eigen::MatrixXd>> s;  // P x P of K x K, S_pq = Xlag_p' Xlag_q
  std::vector<Eigen::MatrixXd> dlag;            // N of P x (K*P): D_n[p, k + K*q]
  std::vector<Eigen::VectorXd> dy;              // N of P,       d_n * y window
  std::vector<Eigen::MatrixXd> ddt;             // N of P x P,   d_n d_n'

  Eigen::Index usable() const { return t - p; }
};

LaggedStats precompute_lagged(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int p);

struct NoiseState {
  Eigen::VectorXd lambda;  // N precisions
  Eigen::MatrixXd a;       // P x N AR coefficients, each in (-1, 1)
  int p() const { return static_cast<int>(a.rows()); }
  void validate() const;
};

/// The quadratic form l_n(w): for P = 0 the residual sum of squares, for
/// P > 0 the prewhitened form over the usable window.
double loglik_term(const LaggedStats& stats, Eigen::Index n, const Eigen::Ref<const Eigen::VectorXd>& w,
                   const Eigen::Ref<const Eigen::VectorXd>& a_col);

/// Per-voxel likelihood block Q~_n = X'X - RA - (RA)' + A'SA (equals the
/// prewhitened design Gram matrix) and q~_n.
Eigen::MatrixXd likelihood_block(const LaggedStats& stats, Eigen::Index n,
                                 const Eigen::Ref<const Eigen::VectorXd>& a_col);
Eigen::VectorXd likelihood_rhs(const LaggedStats& stats, Eigen::Index n,
                               const Eigen::Ref<const Eigen::VectorXd>& a_col);

/// d Q~_n / d A_{p,n} = -R_p - R_p' + S_p A + (S_p A)'.
Eigen::MatrixXd likelihood_block_da(const LaggedStats& stats, Eigen::Index n, int p_idx,
                                    const Eigen::Ref<const Eigen::VectorXd>& a_col);

/// d l_n / d A_{.,n} at w (Eq. of the AR gradient terms).
Eigen::VectorXd loglik_term_da(const LaggedStats& stats, Eigen::Index n,
                               const Eigen::Ref<const Eigen::VectorXd>& w,
                               const Eigen::Ref<const Eigen::VectorXd>& a_col);

/// Stationary variance of the AR(P) process with innovation precision
/// lambda, via the Yule-Walker equations.
double ar_process_variance(const Eigen::Ref<const Eigen::VectorXd>& a_col, double lambda);

bool ar_is_stationary(const Eigen::Ref<const Eigen::VectorXd>& a_col);

}  // namespace ebgmrf
