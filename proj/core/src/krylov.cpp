#include "ebgmrf/krylov.hpp"

namespace ebgmrf {

PcgResult pcg_solve(const ApplyFn& apply, const Eigen::Ref<const Eigen::VectorXd>& b,
                    const PcgOptions& opts) {
  const Eigen::Index n = b.size();
  PcgResult out;
  const double norm_b = b.norm();
  if (norm_b == 0.0) {
    out.x = Eigen::VectorXd::Zero(n);
    return out;
  }

  Eigen::VectorXd x = opts.x0 ? *opts.x0 : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r(n), z(n), p(n), ap(n);
  if (opts.x0) {
    apply(x, ap);
    r = b - ap;
  } else {
    r = b;
  }

  auto precondition = [&](const Eigen::VectorXd& in, Eigen::VectorXd& outv) {
    if (opts.jacobi)
      outv = in.cwiseQuotient(*opts.jacobi);
    else
      outv = in;
  };

  precondition(r, z);
  p = z;
  double rz = r.dot(z);
  double res = r.norm() / norm_b;
  int it = 0;
  if (opts.iterate_history) opts.iterate_history->push_back(x);
  while (res > opts.tol && it < opts.max_iter) {
    apply(p, ap);
    const double denom = p.dot(ap);
    if (!(denom > 0.0))
      throw PcgError("pcg_solve: operator is not positive definite on the Krylov space", res);
    const double alpha = rz / denom;
    x += alpha * p;
    r -= alpha * ap;
    precondition(r, z);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
    res = r.norm() / norm_b;
    ++it;
    if (opts.iterate_history) opts.iterate_history->push_back(x);
  }
  if (res > opts.tol)
    throw PcgError("pcg_solve: no convergence in " + std::to_string(opts.max_iter) +
                       " iterations (rel. residual " + std::to_string(res) + ")",
                   res);
  out.x = std::move(x);
  out.iterations = it;
  out.rel_residual = res;
  return out;
}

double hutchinson_trace(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& solve_a,
                        const ApplyFn& apply_t, const ProbeStream& probes, int n_probes) {
  double acc = 0.0;
  Eigen::VectorXd tv(probes.dim());
  for (int j = 0; j < n_probes; ++j) {
    const Eigen::VectorXd v = probes.probe(static_cast<std::uint64_t>(j));
    apply_t(v, tv);
    acc += v.dot(solve_a(tv));
  }
  return acc / n_probes;
}

}  // namespace ebgmrf
