#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ebgmrf/lattice.hpp"

namespace ebgmrf {

/// 3D or 4D volume, x-fastest raster, float32 payload in memory.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  int t = 1;
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<float> data;

  std::size_t frame_size() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  bool is_4d() const { return t > 1; }
  float at(int x, int y, int z, int frame = 0) const {
    return data[frame * frame_size() + x + static_cast<std::size_t>(dims[0]) * (y + static_cast<std::size_t>(dims[1]) * z)];
  }
};

/// Reads a volume; format chosen by extension (.nii for the NIfTI-1
/// uncompressed subset, .rvol for the raw sidecar format).
Volume read_volume(const std::string& path);
void write_volume(const std::string& path, const Volume& vol);

std::vector<std::uint8_t> mask_from_volume(const Volume& vol);

/// Loads the 4D payload into a T x N matrix under the mask.
Eigen::MatrixXd series_from_volume(const Volume& vol, const MaskedLattice& lattice);

/// Scatters an in-mask field (or K of them stacked) back into volumes with
/// the lattice geometry; outside-mask cells are zero.
Volume volume_from_field(const MaskedLattice& lattice, const Eigen::Ref<const Eigen::VectorXd>& field,
                         const std::array<double, 3>& origin = {0.0, 0.0, 0.0});
Volume volume_from_series(const MaskedLattice& lattice, const Eigen::Ref<const Eigen::MatrixXd>& series,
                          const std::array<double, 3>& origin = {0.0, 0.0, 0.0});

/// Design matrix CSV: T rows, K columns, optional header auto-detected.
Eigen::MatrixXd read_design(const std::string& path);

}  // namespace ebgmrf
