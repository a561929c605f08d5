#include <Eigen/Dense>
#include <cmath>

#include "ebgmrf/krylov.hpp"
#include "ebgmrf/rng.hpp"
#include "ebgmrf/spatial_prior.hpp"
#include "harness.hpp"
#include "helpers.hpp"
#include "support/instances.hpp"

using namespace ebgmrf;

namespace acceptance {

ACCEPTANCE_CRITERION(3, "Hutchinson estimator: 4-SE agreement at 1e5 probes; T=Q~ gives the dimension") {
  Rng rng(3001);
  const Eigen::Index n = 100;
  const Eigen::MatrixXd a = ebgmrf::testing::random_spd(n, rng);
  const Eigen::MatrixXd t = ebgmrf::testing::random_spd(n, rng);
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  const double truth = (a.inverse() * t).trace();

  const ProbeStream probes(3002, n);
  const int n_probes = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (int j = 0; j < n_probes; ++j) {
    const Eigen::VectorXd v = probes.probe(static_cast<std::uint64_t>(j));
    const double e = v.dot(llt.solve(t * v));
    acc += e;
    acc2 += e * e;
  }
  const double mean = acc / n_probes;
  const double se = std::sqrt((acc2 / n_probes - mean * mean) / n_probes);
  ctx.note("exact trace ", truth, ", estimate ", mean, ", |diff|/SE = ",
           std::abs(mean - truth) / se);
  ctx.expect(std::abs(mean - truth) <= 4.0 * se, "mean within 4 standard errors of dense trace");

  auto solve_a = [&](const Eigen::VectorXd& v) { return Eigen::VectorXd(llt.solve(v)); };
  auto apply_a = [&](const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) {
    out = a * v;
  };
  const double dim_est = hutchinson_trace(solve_a, apply_a, probes, 64);
  ctx.note("T = Q~ estimate: ", dim_est);
  ctx.expect(std::abs(dim_est - static_cast<double>(n)) < 1e-9, "T = Q~ returns the dimension exactly");
}

ACCEPTANCE_CRITERION(4, "PCG: 1e-8 residuals, 1e-7 accuracy vs dense solves, Jacobi consistency") {
  Rng rng(3003);
  for (Eigen::Index n : {100, 300, 500}) {
    const Eigen::MatrixXd m = ebgmrf::testing::random_spd(n, rng);
    const Eigen::VectorXd b = ebgmrf::testing::random_matrix(n, 1, rng);
    const Eigen::VectorXd x_true = m.llt().solve(b);

    auto apply = [&](const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) {
      out = m * v;
    };
    const PcgResult plain = pcg_solve(apply, b);
    const Eigen::VectorXd diag = m.diagonal();
    PcgOptions jopt;
    jopt.jacobi = &diag;
    const PcgResult jacobi = pcg_solve(apply, b, jopt);

    const double rel = (plain.x - x_true).norm() / x_true.norm();
    const double jdiff = (plain.x - jacobi.x).norm() / x_true.norm();
    ctx.note("n = ", n, ": residual ", plain.rel_residual, ", rel err ", rel,
             ", |jacobi - plain| ", jdiff);
    ctx.expect(plain.rel_residual <= 1e-8, "relative residual <= 1e-8");
    ctx.expect(rel <= 1e-7, "relative error vs dense <= 1e-7");
    ctx.expect(jdiff <= 1e-8 * 2.0, "preconditioning changes the solution by <= tolerance");
  }
}

ACCEPTANCE_CRITERION(5, "spectral quadrature: 1/(8 pi) closed form and det-1 anisotropy invariance") {
  const double truth = 1.0 / (8.0 * M_PI);
  const double iso = spectral_variance_quadrature(2.0, 1.0, 1.0, {1.0, 1.0, 1.0});
  const double aniso = spectral_variance_quadrature(2.0, 1.0, 1.0, {0.5, 2.0, 1.0});
  ctx.note("iso = ", iso, " (truth ", truth, "), aniso = ", aniso);
  ctx.expect(std::abs(iso - truth) / truth <= 1e-4, "quadrature equals 1/(8 pi) within 1e-4");
  ctx.expect(std::abs(aniso - iso) / iso <= 1e-4, "H = diag(0.5, 2, 1) leaves the variance invariant");
}

}  // namespace acceptance
