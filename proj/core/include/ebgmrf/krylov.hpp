#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>

#include "ebgmrf/rng.hpp"

namespace ebgmrf {

using ApplyFn = std::function<void(const Eigen::Ref<const Eigen::VectorXd>&, Eigen::Ref<Eigen::VectorXd>)>;

struct PcgOptions {
  double tol = 1e-8;       // relative residual
  int max_iter = 2000;
  const Eigen::VectorXd* jacobi = nullptr;  // diagonal preconditioner, optional
  const Eigen::VectorXd* x0 = nullptr;      // warm start, optional
  std::vector<Eigen::VectorXd>* iterate_history = nullptr;  // diagnostics only
};

struct PcgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double rel_residual = 0.0;
};

class PcgError : public std::runtime_error {
 public:
  PcgError(const std::string& msg, double residual) : std::runtime_error(msg), rel_residual(residual) {}
  double rel_residual;
};

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. Throws PcgError carrying the final residual on non-convergence.
PcgResult pcg_solve(const ApplyFn& apply, const Eigen::Ref<const Eigen::VectorXd>& b,
                    const PcgOptions& opts = {});

/// Deterministic Rademacher probes: probe(index) depends only on (seed, index).
class ProbeStream {
 public:
  ProbeStream(std::uint64_t seed, Eigen::Index dim) : seed_(seed), dim_(dim) {}

  Eigen::VectorXd probe(std::uint64_t index) const {
    Rng rng = Rng(seed_).child(0x70726f6265ull, index);  // "probe"
    Eigen::VectorXd v(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i) v[i] = rng.rademacher();
    return v;
  }

  Eigen::Index dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  Eigen::Index dim_;
};

/// Hutchinson estimate of tr(A^{-1} T): mean over probes of v' A^{-1} T v,
/// where solve_a applies A^{-1} (one PCG per probe) and apply_t applies T.
double hutchinson_trace(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& solve_a,
                        const ApplyFn& apply_t, const ProbeStream& probes, int n_probes);

}  // namespace ebgmrf
