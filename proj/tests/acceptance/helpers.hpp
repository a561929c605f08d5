#pragma once

#include <Eigen/Dense>

#include "ebgmrf/eb.hpp"
#include "ebgmrf/evalsim.hpp"
#include "ebgmrf/lattice.hpp"
#include "ebgmrf/spatial_prior.hpp"
#include "ebgmrf/system.hpp"

namespace acceptance {

/// Smoothed boxcar activity column plus an intercept column.
inline Eigen::MatrixXd task_design(int t, int period = 24) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(t, 2);
  double s = 0.0;
  for (int r = 0; r < t; ++r) {
    const double box = (r / (period / 2)) % 2 == 0 ? 1.0 : 0.0;
    s = 0.7 * s + 0.3 * box;
    x(r, 0) = s;
    x(r, 1) = 1.0;
  }
  return x;
}

struct World {
  ebgmrf::MaskedLattice lattice;
  ebgmrf::GraphSet graphs;
};

inline World cube_world(int side, double voxel_mm = 3.0) {
  World w;
  const std::array<int, 3> dims{side, side, side};
  w.lattice = ebgmrf::build_lattice(dims, ebgmrf::full_mask(dims), {voxel_mm, voxel_mm, voxel_mm});
  w.graphs = ebgmrf::build_graph_set(w.lattice);
  return w;
}

inline World ellipsoid_world(int side, double voxel_mm = 3.0) {
  World w;
  const std::array<int, 3> dims{side, side, side};
  w.lattice =
      ebgmrf::build_lattice(dims, ebgmrf::ellipsoid_mask(dims), {voxel_mm, voxel_mm, voxel_mm});
  w.graphs = ebgmrf::build_graph_set(w.lattice);
  return w;
}

inline ebgmrf::SpatialPriorSpec pc_matern_spec(ebgmrf::PriorKind kind, double sigma0) {
  ebgmrf::SpatialPriorSpec s;
  s.kind = kind;
  s.hyper.variant = ebgmrf::HyperPriorSpec::Variant::PcMatern;
  s.hyper.sigma0 = sigma0;
  s.optimize_tau2 = true;
  s.optimize_kappa2 = true;
  s.optimize_h = s.anisotropic();
  ebgmrf::init_spatial_from_hyperprior(s);
  return s;
}

}  // namespace acceptance
