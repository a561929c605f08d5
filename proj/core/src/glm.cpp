#include "ebgmrf/glm.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <stdexcept>

namespace ebgmrf {

void Dataset::validate(int noise_order) const {
  if (y.rows() != x.rows()) throw std::invalid_argument("Dataset: Y and X row counts differ");
  if (t() <= noise_order) throw std::invalid_argument("Dataset: needs T > P");
  std::vector<char> seen(static_cast<std::size_t>(k()), 0);
  for (int c : activity_set) {
    if (c < 0 || c >= k()) throw std::invalid_argument("Dataset: activity column out of range");
    seen[static_cast<std::size_t>(c)] += 1;
  }
  for (int c : nuisance_set) {
    if (c < 0 || c >= k()) throw std::invalid_argument("Dataset: nuisance column out of range");
    seen[static_cast<std::size_t>(c)] += 1;
  }
  for (char s : seen)
    if (s != 1) throw std::invalid_argument("Dataset: activity/nuisance sets must partition 1..K");
}

void Dataset::compute_global_mean() { global_mean_signal = y.mean(); }

LaggedStats precompute_lagged(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int p) {
  const Eigen::Index t = x.rows(), k = x.cols(), n = y.cols();
  if (y.rows() != t) throw std::invalid_argument("precompute_lagged: Y and X row counts differ");
  if (p < 0 || p >= t) throw std::invalid_argument("precompute_lagged: needs 0 <= P < T");

  LaggedStats st;
  st.t = static_cast<int>(t);
  st.k = static_cast<int>(k);
  st.p = p;
  const Eigen::Index u = t - p;  // usable rows, t = p+1 .. T

  const Eigen::MatrixXd x0 = x.bottomRows(u);
  st.xtx = x0.transpose() * x0;
  st.ytx.resize(n, k);
  st.yty.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto y0 = y.col(j).tail(u);
    st.ytx.row(j) = y0.transpose() * x0;
    st.yty[j] = y0.squaredNorm();
  }
  if (p == 0) return st;

  st.xlag.resize(static_cast<std::size_t>(p));
  for (int q = 0; q < p; ++q) st.xlag[static_cast<std::size_t>(q)] = x.middleRows(p - 1 - q, u);

  st.r.resize(static_cast<std::size_t>(p));
  st.s.assign(static_cast<std::size_t>(p), std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(p)));
  for (int a = 0; a < p; ++a) {
    st.r[static_cast<std::size_t>(a)] = x0.transpose() * st.xlag[static_cast<std::size_t>(a)];
    for (int c = 0; c < p; ++c)
      st.s[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] =
          st.xlag[static_cast<std::size_t>(a)].transpose() * st.xlag[static_cast<std::size_t>(c)];
  }

  st.d.resize(static_cast<std::size_t>(n));
  st.b.resize(static_cast<std::size_t>(n));
  st.dlag.resize(static_cast<std::size_t>(n));
  st.dy.resize(static_cast<std::size_t>(n));
  st.ddt.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::MatrixXd dn(p, u);
    for (int q = 0; q < p; ++q) dn.row(q) = y.col(j).segment(p - 1 - q, u).transpose();
    const auto y0 = y.col(j).tail(u);
    Eigen::MatrixXd bn(p, k);
    for (int q = 0; q < p; ++q)
      bn.row(q) = y0.transpose() * st.xlag[static_cast<std::size_t>(q)] + dn.row(q) * x0;
    Eigen::MatrixXd dl(p, k * p);
    for (int q = 0; q < p; ++q)
      dl.middleCols(static_cast<Eigen::Index>(k) * q, k) = dn * st.xlag[static_cast<std::size_t>(q)];
    st.d[static_cast<std::size_t>(j)] = dn;
    st.b[static_cast<std::size_t>(j)] = std::move(bn);
    st.dlag[static_cast<std::size_t>(j)] = std::move(dl);
    st.dy[static_cast<std::size_t>(j)] = dn * y0;
    st.ddt[static_cast<std::size_t>(j)] = dn * dn.transpose();
  }
  return st;
}

void NoiseState::validate() const {
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (!(lambda[i] > 0.0)) throw std::invalid_argument("NoiseState: lambda must be positive");
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!(std::abs(a.data()[i]) < 1.0))
      throw std::invalid_argument("NoiseState: AR coefficients must lie in (-1,1)");
}

namespace {

// (D_n w)_{pq} = sum_k D_n[p, k + K q] w_k as a P x P matrix.
Eigen::MatrixXd contract_dlag(const LaggedStats& st, Eigen::Index n,
                              const Eigen::Ref<const Eigen::VectorXd>& w) {
  const int p = st.p, k = st.k;
  Eigen::MatrixXd out(p, p);
  const Eigen::MatrixXd& dl = st.dlag[static_cast<std::size_t>(n)];
  for (int q = 0; q < p; ++q) out.col(q) = dl.middleCols(static_cast<Eigen::Index>(k) * q, k) * w;
  return out;
}

}  // namespace

double loglik_term(const LaggedStats& st, Eigen::Index n, const Eigen::Ref<const Eigen::VectorXd>& w,
                   const Eigen::Ref<const Eigen::VectorXd>& a_col) {
  double l = st.yty[n] - 2.0 * st.ytx.row(n).dot(w) + w.dot(st.xtx * w);
  if (st.p == 0) return l;
  if (a_col.size() != st.p) throw std::invalid_argument("loglik_term: AR coefficient size mismatch");

  const auto& bn = st.b[static_cast<std::size_t>(n)];
  l += -2.0 * a_col.dot(st.dy[static_cast<std::size_t>(n)]) + 2.0 * a_col.dot(bn * w);
  for (int q = 0; q < st.p; ++q) l += -2.0 * a_col[q] * w.dot(st.r[static_cast<std::size_t>(q)] * w);
  const Eigen::MatrixXd dw = contract_dlag(st, n, w);
  Eigen::MatrixXd f = st.ddt[static_cast<std::size_t>(n)] - dw - dw.transpose();
  for (int a = 0; a < st.p; ++a)
    for (int c = 0; c < st.p; ++c)
      f(a, c) += w.dot(st.s[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] * w);
  l += a_col.dot(f * a_col);
  return l;
}

Eigen::MatrixXd likelihood_block(const LaggedStats& st, Eigen::Index n,
                                 const Eigen::Ref<const Eigen::VectorXd>& a_col) {
  Eigen::MatrixXd q = st.xtx;
  if (st.p == 0) return q;
  (void)n;
  for (int p_idx = 0; p_idx < st.p; ++p_idx) {
    const Eigen::MatrixXd& rp = st.r[static_cast<std::size_t>(p_idx)];
    q -= a_col[p_idx] * (rp + rp.transpose());
    for (int q_idx = 0; q_idx < st.p; ++q_idx)
      q += a_col[p_idx] * a_col[q_idx] *
           st.s[static_cast<std::size_t>(p_idx)][static_cast<std::size_t>(q_idx)];
  }
  return q;
}

Eigen::VectorXd likelihood_rhs(const LaggedStats& st, Eigen::Index n,
                               const Eigen::Ref<const Eigen::VectorXd>& a_col) {
  Eigen::VectorXd q = st.ytx.row(n).transpose();
  if (st.p == 0) return q;
  q -= st.b[static_cast<std::size_t>(n)].transpose() * a_col;
  const Eigen::MatrixXd& dl = st.dlag[static_cast<std::size_t>(n)];
  for (int q_idx = 0; q_idx < st.p; ++q_idx)
    q += a_col[q_idx] *
         (dl.middleCols(static_cast<Eigen::Index>(st.k) * q_idx, st.k).transpose() * a_col);
  return q;
}

Eigen::MatrixXd likelihood_block_da(const LaggedStats& st, Eigen::Index n, int p_idx,
                                    const Eigen::Ref<const Eigen::VectorXd>& a_col) {
  (void)n;
  const Eigen::MatrixXd& rp = st.r[static_cast<std::size_t>(p_idx)];
  Eigen::MatrixXd dq = -rp - rp.transpose();
  Eigen::MatrixXd sa = Eigen::MatrixXd::Zero(st.k, st.k);
  for (int q_idx = 0; q_idx < st.p; ++q_idx)
    sa += a_col[q_idx] * st.s[static_cast<std::size_t>(p_idx)][static_cast<std::size_t>(q_idx)];
  dq += sa + sa.transpose();
  return dq;
}

Eigen::VectorXd loglik_term_da(const LaggedStats& st, Eigen::Index n,
                               const Eigen::Ref<const Eigen::VectorXd>& w,
                               const Eigen::Ref<const Eigen::VectorXd>& a_col) {
  Eigen::VectorXd g = -st.dy[static_cast<std::size_t>(n)] + st.b[static_cast<std::size_t>(n)] * w;
  for (int q = 0; q < st.p; ++q) g[q] -= w.dot(st.r[static_cast<std::size_t>(q)] * w);
  const Eigen::MatrixXd dw = contract_dlag(st, n, w);
  Eigen::MatrixXd f = st.ddt[static_cast<std::size_t>(n)] - dw - dw.transpose();
  for (int a = 0; a < st.p; ++a)
    for (int c = 0; c < st.p; ++c)
      f(a, c) += w.dot(st.s[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] * w);
  g += f * a_col;
  return 2.0 * g;
}

bool ar_is_stationary(const Eigen::Ref<const Eigen::VectorXd>& a_col) {
  const int p = static_cast<int>(a_col.size());
  if (p == 0) return true;
  if (p == 1) return std::abs(a_col[0]) < 1.0;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  companion.row(0) = a_col.transpose();
  companion.block(1, 0, p - 1, p - 1).setIdentity();
  return companion.eigenvalues().cwiseAbs().maxCoeff() < 1.0;
}

double ar_process_variance(const Eigen::Ref<const Eigen::VectorXd>& a_col, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("ar_process_variance: lambda must be positive");
  const int p = static_cast<int>(a_col.size());
  const double sigma2 = 1.0 / lambda;
  if (p == 0) return sigma2;
  if (!ar_is_stationary(a_col))
    throw std::domain_error("ar_process_variance: non-stationary AR coefficients");
  // Yule-Walker for (gamma_0, ..., gamma_P):
  //   gamma_0 - sum_p a_p gamma_p = sigma^2,
  //   gamma_k - sum_p a_p gamma_{|k-p|} = 0 for k = 1..P.
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p + 1, p + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + 1);
  rhs[0] = sigma2;
  for (int k = 0; k <= p; ++k) {
    m(k, k) += 1.0;
    for (int j = 1; j <= p; ++j) m(k, std::abs(k - j)) -= a_col[j - 1];
  }
  const Eigen::VectorXd gamma = m.fullPivLu().solve(rhs);
  return gamma[0];
}

}  // namespace ebgmrf
