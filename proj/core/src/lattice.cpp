#include "ebgmrf/lattice.hpp"

#include <queue>
#include <stdexcept>

namespace ebgmrf {

MaskedLattice build_lattice(const std::array<int, 3>& dims, const std::vector<std::uint8_t>& mask,
                            const std::array<double, 3>& voxel_size) {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw std::invalid_argument("build_lattice: dims must be positive");
  const std::size_t n_cells =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (mask.size() != n_cells)
    throw std::invalid_argument("build_lattice: mask size does not match dims");

  MaskedLattice lat;
  lat.dims = dims;
  lat.voxel_size = voxel_size;
  lat.inside.assign(mask.begin(), mask.end());
  lat.index_of.assign(n_cells, -1);

  // x-fastest raster over in-mask cells fixes the linear ordering.
  std::int64_t next = 0;
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) {
        const std::int64_t r = lat.raster(x, y, z);
        if (mask[r]) {
          lat.index_of[r] = next++;
          lat.coord_of.push_back({x, y, z});
        }
      }
  lat.n = next;
  if (lat.n == 0) throw std::domain_error("build_lattice: empty mask");
  return lat;
}

namespace {

constexpr std::array<std::array<int, 3>, 6> kOffsets = {{
    {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

bool axis_selected(Axis axis, int dir) {
  switch (axis) {
    case Axis::All: return true;
    case Axis::X: return dir == 0;
    case Axis::Y: return dir == 1;
    case Axis::Z: return dir == 2;
  }
  return false;
}

}  // namespace

GraphOperator graph_laplacian(const MaskedLattice& lat, Axis axis) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(lat.n) * 7);
  for (std::int64_t i = 0; i < lat.n; ++i) {
    const auto& c = lat.coord_of[static_cast<std::size_t>(i)];
    int degree = 0;
    for (const auto& off : kOffsets) {
      const int dir = off[0] != 0 ? 0 : (off[1] != 0 ? 1 : 2);
      if (!axis_selected(axis, dir)) continue;
      const int x = c[0] + off[0], y = c[1] + off[1], z = c[2] + off[2];
      if (!lat.in_mask(x, y, z)) continue;
      ++degree;
      trip.emplace_back(i, lat.index(x, y, z), -1.0);
    }
    trip.emplace_back(i, i, static_cast<double>(degree));
  }
  GraphOperator op;
  op.axis = axis;
  op.matrix.resize(lat.n, lat.n);
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  op.matrix.makeCompressed();
  return op;
}

std::vector<int> connected_components(const MaskedLattice& lat) {
  std::vector<int> label(static_cast<std::size_t>(lat.n), -1);
  int next = 0;
  for (std::int64_t s = 0; s < lat.n; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    std::queue<std::int64_t> q;
    q.push(s);
    label[static_cast<std::size_t>(s)] = next;
    while (!q.empty()) {
      const std::int64_t i = q.front();
      q.pop();
      const auto& c = lat.coord_of[static_cast<std::size_t>(i)];
      for (const auto& off : kOffsets) {
        const int x = c[0] + off[0], y = c[1] + off[1], z = c[2] + off[2];
        if (!lat.in_mask(x, y, z)) continue;
        const std::int64_t j = lat.index(x, y, z);
        if (label[static_cast<std::size_t>(j)] < 0) {
          label[static_cast<std::size_t>(j)] = next;
          q.push(j);
        }
      }
    }
    ++next;
  }
  return label;
}

std::vector<std::array<std::int64_t, 2>> neighbor_pairs(const MaskedLattice& lat, Axis axis) {
  std::vector<std::array<std::int64_t, 2>> pairs;
  for (std::int64_t i = 0; i < lat.n; ++i) {
    const auto& c = lat.coord_of[static_cast<std::size_t>(i)];
    // Positive directions only, so each unordered pair appears once.
    for (int dir = 0; dir < 3; ++dir) {
      if (!axis_selected(axis, dir)) continue;
      int x = c[0], y = c[1], z = c[2];
      (dir == 0 ? x : dir == 1 ? y : z) += 1;
      if (!lat.in_mask(x, y, z)) continue;
      pairs.push_back({i, lat.index(x, y, z)});
    }
  }
  return pairs;
}

GraphSet build_graph_set(const MaskedLattice& lat) {
  GraphSet gs;
  gs.g = graph_laplacian(lat, Axis::All);
  gs.gx = graph_laplacian(lat, Axis::X);
  gs.gy = graph_laplacian(lat, Axis::Y);
  gs.gz = graph_laplacian(lat, Axis::Z);
  gs.edges = neighbor_pairs(lat, Axis::All);
  gs.components = connected_components(lat);
  gs.n_components = component_count(gs.components);
  return gs;
}

std::vector<std::uint8_t> full_mask(const std::array<int, 3>& dims) {
  return std::vector<std::uint8_t>(
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 1);
}

std::vector<std::uint8_t> ellipsoid_mask(const std::array<int, 3>& dims) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
  const double cx = 0.5 * (dims[0] - 1), cy = 0.5 * (dims[1] - 1), cz = 0.5 * (dims[2] - 1);
  const double rx = 0.5 * dims[0], ry = 0.5 * dims[1], rz = 0.5 * dims[2];
  std::size_t r = 0;
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x, ++r) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry, dz = (z - cz) / rz;
        mask[r] = (dx * dx + dy * dy + dz * dz <= 1.0) ? 1 : 0;
      }
  return mask;
}

}  // namespace ebgmrf
