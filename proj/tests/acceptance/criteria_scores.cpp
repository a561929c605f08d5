#include <cmath>
#include <vector>

#include "ebgmrf/evalsim.hpp"
#include "ebgmrf/rng.hpp"
#include "ebgmrf/stats.hpp"
#include "harness.hpp"

using namespace ebgmrf;

namespace acceptance {

ACCEPTANCE_CRITERION(11, "proper scores: Monte Carlo CRPS, interval width, propriety on a sigma grid") {
  // Closed-form CRPS vs the kernel representation E|Z - x| - E|Z - Z'|/2,
  // 1e6 draws with antithetic pairing, at 10 (x, sigma) pairs.
  const std::vector<std::pair<double, double>> pairs = {
      {0.0, 0.5}, {0.3, 0.5}, {-0.7, 0.5}, {0.2, 0.8}, {1.1, 0.8},
      {-0.4, 0.3}, {0.9, 1.0}, {-1.3, 1.0}, {0.05, 0.6}, {2.0, 0.9}};
  double worst = 0.0;
  int idx = 0;
  for (const auto& [x, sigma] : pairs) {
    Rng rng = Rng(11001).child(static_cast<std::uint64_t>(idx++));
    const int draws = 1000000;
    double t1 = 0.0, t2 = 0.0;
    for (int i = 0; i < draws / 2; ++i) {
      const double z1 = sigma * rng.normal();
      const double z2 = sigma * rng.normal();
      t1 += std::abs(z1 - x) + std::abs(-z1 - x);
      t2 += std::abs(z1 - z2) + std::abs(z1 + z2);  // antithetic partner of z2
    }
    const double mc = t1 / draws - 0.5 * t2 / draws;
    worst = std::max(worst, std::abs(crps_normal(x, 0.0, sigma) - mc));
  }
  ctx.note("worst |closed form - MC| over 10 pairs: ", worst);
  ctx.expect(worst <= 1e-3, "CRPS closed form within 1e-3 of its Monte Carlo definition");

  // Interior interval score: 2 A sigma with A = Phi^{-1}(0.975).
  const double a = normal_quantile(0.975);
  ctx.note("A = ", a);
  ctx.expect(std::abs(a - 1.95996398454005) < 1e-8, "A ~= 1.95996 at u = 0.05");
  ctx.expect(std::abs(interval_score_normal(0.5, 0.0, 1.0, 0.05) - 2.0 * a) < 1e-12,
             "interior point gives INT = 2 A sigma");

  // Propriety: generative N(0, 1), predictive sigma on the grid
  // {0.5, 0.75, 1, 1.5, 2}; each score's empirical mean over 1e5 draws is
  // minimized at the true sigma.
  const std::vector<double> grid = {0.5, 0.75, 1.0, 1.5, 2.0};
  Rng rng(11002);
  const int draws = 100000;
  std::vector<double> xs(static_cast<std::size_t>(draws));
  for (auto& x : xs) x = rng.normal();
  std::vector<double> mean_crps(grid.size(), 0.0), mean_ign(grid.size(), 0.0),
      mean_int(grid.size(), 0.0);
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    for (double x : xs) {
      mean_crps[gi] += crps_normal(x, 0.0, grid[gi]);
      mean_ign[gi] += ign_normal(x, 0.0, grid[gi]);
      mean_int[gi] += interval_score_normal(x, 0.0, grid[gi], 0.05);
    }
    mean_crps[gi] /= draws;
    mean_ign[gi] /= draws;
    mean_int[gi] /= draws;
  }
  auto argmin = [](const std::vector<double>& v) {
    return std::distance(v.begin(), std::min_element(v.begin(), v.end()));
  };
  ctx.note("CRPS over grid: ", mean_crps[0], " ", mean_crps[1], " ", mean_crps[2], " ",
           mean_crps[3], " ", mean_crps[4]);
  ctx.expect(argmin(mean_crps) == 2, "CRPS minimized at the true sigma");
  ctx.expect(argmin(mean_ign) == 2, "IGN minimized at the true sigma");
  ctx.expect(argmin(mean_int) == 2, "INT minimized at the true sigma");
}

}  // namespace acceptance
