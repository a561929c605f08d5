#pragma once

#include <Eigen/SparseCore>
#include <array>
#include <cstdint>
#include <vector>

namespace ebgmrf {

enum class Axis { All, X, Y, Z };

/// Masked 3D voxel domain with a deterministic x-fastest raster ordering of
/// the in-mask cells. Immutable after construction.
struct MaskedLattice {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};  // mm
  std::vector<std::uint8_t> inside;                 // raster order, size nx*ny*nz
  std::vector<std::int64_t> index_of;               // raster -> linear index, -1 outside
  std::vector<std::array<int, 3>> coord_of;         // linear index -> grid coordinate
  std::int64_t n = 0;                               // in-mask voxel count

  std::int64_t raster(int x, int y, int z) const {
    return x + static_cast<std::int64_t>(dims[0]) * (y + static_cast<std::int64_t>(dims[1]) * z);
  }
  bool in_mask(int x, int y, int z) const {
    if (x < 0 || y < 0 || z < 0 || x >= dims[0] || y >= dims[1] || z >= dims[2]) return false;
    return inside[raster(x, y, z)] != 0;
  }
  std::int64_t index(int x, int y, int z) const { return index_of[raster(x, y, z)]; }
};

/// Sparse graph Laplacian restricted to the mask: diagonal holds the in-mask
/// neighbor count along the tagged axis set, off-diagonals are -1 at
/// neighbor pairs. Rows sum to zero.
struct GraphOperator {
  Axis axis = Axis::All;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
};

MaskedLattice build_lattice(const std::array<int, 3>& dims, const std::vector<std::uint8_t>& mask,
                            const std::array<double, 3>& voxel_size);

GraphOperator graph_laplacian(const MaskedLattice& lattice, Axis axis);

/// Component label per voxel (0-based); labels partition the in-mask set.
std::vector<int> connected_components(const MaskedLattice& lattice);

inline int component_count(const std::vector<int>& labels) {
  int m = -1;
  for (int l : labels) m = std::max(m, l);
  return m + 1;
}

/// Unordered 6-connectivity neighbor pairs (i < j) along the tagged axis set.
std::vector<std::array<std::int64_t, 2>> neighbor_pairs(const MaskedLattice& lattice, Axis axis);

/// Everything derived from the lattice graph that the priors share.
struct GraphSet {
  GraphOperator g, gx, gy, gz;
  std::vector<std::array<std::int64_t, 2>> edges;  // Axis::All pairs
  std::vector<int> components;
  int n_components = 0;
};

GraphSet build_graph_set(const MaskedLattice& lattice);

/// Convenience masks for tests and simulation.
std::vector<std::uint8_t> full_mask(const std::array<int, 3>& dims);
std::vector<std::uint8_t> ellipsoid_mask(const std::array<int, 3>& dims);

}  // namespace ebgmrf
