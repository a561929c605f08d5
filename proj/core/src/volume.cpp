#include "ebgmrf/volume.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ebgmrf {

namespace {

// NIfTI-1 header, 348 bytes.
#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Volume read_nifti(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_volume: cannot open " + path);
  Nifti1Header hdr{};
  in.read(reinterpret_cast<char*>(&hdr), sizeof(hdr));
  if (!in) throw std::runtime_error("read_volume: truncated NIfTI header in " + path);
  if (hdr.sizeof_hdr != 348)
    throw std::runtime_error("read_volume: unsupported sizeof_hdr (byte-swapped or non-NIfTI-1): " + path);
  if (std::strncmp(hdr.magic, "n+1", 3) != 0)
    throw std::runtime_error("read_volume: bad magic (want single-file NIfTI-1 'n+1'): " + path);
  if (hdr.dim[0] != 3 && hdr.dim[0] != 4)
    throw std::runtime_error("read_volume: unsupported dim[0] (3D or 4D only): " + path);
  if (hdr.datatype != kDtInt16 && hdr.datatype != kDtFloat32 && hdr.datatype != kDtFloat64)
    throw std::runtime_error("read_volume: unsupported datatype field (int16/float32/float64 only): " +
                             path);

  Volume vol;
  vol.dims = {hdr.dim[1], hdr.dim[2], hdr.dim[3]};
  vol.t = hdr.dim[0] == 4 ? std::max<int>(1, hdr.dim[4]) : 1;
  vol.voxel_size = {hdr.pixdim[1], hdr.pixdim[2], hdr.pixdim[3]};
  if (hdr.sform_code > 0)
    vol.origin = {hdr.srow_x[3], hdr.srow_y[3], hdr.srow_z[3]};
  else if (hdr.qform_code > 0)
    vol.origin = {hdr.qoffset_x, hdr.qoffset_y, hdr.qoffset_z};

  const std::size_t count = vol.frame_size() * static_cast<std::size_t>(vol.t);
  in.seekg(static_cast<std::streamoff>(hdr.vox_offset), std::ios::beg);
  vol.data.resize(count);
  if (hdr.datatype == kDtFloat32) {
    in.read(reinterpret_cast<char*>(vol.data.data()), static_cast<std::streamsize>(count * 4));
  } else if (hdr.datatype == kDtFloat64) {
    std::vector<double> tmp(count);
    in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(count * 8));
    for (std::size_t i = 0; i < count; ++i) vol.data[i] = static_cast<float>(tmp[i]);
  } else {
    std::vector<std::int16_t> tmp(count);
    in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(count * 2));
    for (std::size_t i = 0; i < count; ++i) vol.data[i] = static_cast<float>(tmp[i]);
  }
  if (!in) throw std::runtime_error("read_volume: truncated payload in " + path);
  const bool scaled = hdr.scl_slope != 0.0f && !(hdr.scl_slope == 1.0f && hdr.scl_inter == 0.0f);
  if (scaled)
    for (auto& v : vol.data) v = v * hdr.scl_slope + hdr.scl_inter;
  return vol;
}

void write_nifti(const std::string& path, const Volume& vol) {
  Nifti1Header hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = vol.is_4d() ? 4 : 3;
  hdr.dim[1] = static_cast<std::int16_t>(vol.dims[0]);
  hdr.dim[2] = static_cast<std::int16_t>(vol.dims[1]);
  hdr.dim[3] = static_cast<std::int16_t>(vol.dims[2]);
  hdr.dim[4] = static_cast<std::int16_t>(vol.t);
  for (int i = 5; i < 8; ++i) hdr.dim[i] = 1;
  hdr.datatype = kDtFloat32;
  hdr.bitpix = 32;
  hdr.pixdim[0] = 1.0f;
  hdr.pixdim[1] = static_cast<float>(vol.voxel_size[0]);
  hdr.pixdim[2] = static_cast<float>(vol.voxel_size[1]);
  hdr.pixdim[3] = static_cast<float>(vol.voxel_size[2]);
  hdr.pixdim[4] = 1.0f;
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.scl_inter = 0.0f;
  hdr.xyzt_units = 10;  // mm | sec
  hdr.sform_code = 1;
  hdr.srow_x[0] = static_cast<float>(vol.voxel_size[0]);
  hdr.srow_y[1] = static_cast<float>(vol.voxel_size[1]);
  hdr.srow_z[2] = static_cast<float>(vol.voxel_size[2]);
  hdr.srow_x[3] = static_cast<float>(vol.origin[0]);
  hdr.srow_y[3] = static_cast<float>(vol.origin[1]);
  hdr.srow_z[3] = static_cast<float>(vol.origin[2]);
  std::memcpy(hdr.magic, "n+1", 4);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_volume: cannot open " + path);
  out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
  const char pad[4] = {0, 0, 0, 0};
  out.write(pad, 4);
  out.write(reinterpret_cast<const char*>(vol.data.data()),
            static_cast<std::streamsize>(vol.data.size() * 4));
  if (!out) throw std::runtime_error("write_volume: short write to " + path);
}

Volume read_rvol(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_volume: cannot open " + path);
  Volume vol;
  std::string line;
  if (!std::getline(in, line) || line.rfind("rvol", 0) != 0)
    throw std::runtime_error("read_volume: bad raw sidecar signature in " + path);
  bool have_dims = false;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dims") {
      ls >> vol.dims[0] >> vol.dims[1] >> vol.dims[2] >> vol.t;
      have_dims = true;
    } else if (key == "voxel_size") {
      ls >> vol.voxel_size[0] >> vol.voxel_size[1] >> vol.voxel_size[2];
    } else if (key == "origin") {
      ls >> vol.origin[0] >> vol.origin[1] >> vol.origin[2];
    } else if (!key.empty()) {
      throw std::runtime_error("read_volume: unknown raw sidecar field '" + key + "' in " + path);
    }
    if (!ls && !key.empty()) throw std::runtime_error("read_volume: malformed field '" + key + "'");
  }
  if (!have_dims) throw std::runtime_error("read_volume: missing dims field in " + path);
  const std::size_t count = vol.frame_size() * static_cast<std::size_t>(vol.t);
  vol.data.resize(count);
  in.read(reinterpret_cast<char*>(vol.data.data()), static_cast<std::streamsize>(count * 4));
  if (!in) throw std::runtime_error("read_volume: truncated payload in " + path);
  return vol;
}

void write_rvol(const std::string& path, const Volume& vol) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_volume: cannot open " + path);
  out << "rvol 1\n";
  out << "dims " << vol.dims[0] << " " << vol.dims[1] << " " << vol.dims[2] << " " << vol.t << "\n";
  out << "voxel_size " << vol.voxel_size[0] << " " << vol.voxel_size[1] << " " << vol.voxel_size[2]
      << "\n";
  out << "origin " << vol.origin[0] << " " << vol.origin[1] << " " << vol.origin[2] << "\n";
  out << "data\n";
  out.write(reinterpret_cast<const char*>(vol.data.data()),
            static_cast<std::streamsize>(vol.data.size() * 4));
  if (!out) throw std::runtime_error("write_volume: short write to " + path);
}

}  // namespace

Volume read_volume(const std::string& path) {
  if (ends_with(path, ".nii.gz") || ends_with(path, ".gz"))
    throw std::runtime_error("read_volume: compressed NIfTI is unsupported: " + path);
  if (ends_with(path, ".nii")) return read_nifti(path);
  if (ends_with(path, ".rvol")) return read_rvol(path);
  throw std::runtime_error("read_volume: unknown volume extension (.nii or .rvol): " + path);
}

void write_volume(const std::string& path, const Volume& vol) {
  if (vol.data.size() != vol.frame_size() * static_cast<std::size_t>(vol.t))
    throw std::invalid_argument("write_volume: payload size does not match dims");
  if (ends_with(path, ".nii")) return write_nifti(path, vol);
  if (ends_with(path, ".rvol")) return write_rvol(path, vol);
  throw std::runtime_error("write_volume: unknown volume extension (.nii or .rvol): " + path);
}

std::vector<std::uint8_t> mask_from_volume(const Volume& vol) {
  std::vector<std::uint8_t> mask(vol.frame_size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = vol.data[i] != 0.0f ? 1 : 0;
  return mask;
}

Eigen::MatrixXd series_from_volume(const Volume& vol, const MaskedLattice& lattice) {
  if (vol.dims != lattice.dims)
    throw std::invalid_argument("series_from_volume: volume and lattice dims differ");
  Eigen::MatrixXd y(vol.t, lattice.n);
  const std::size_t fs = vol.frame_size();
  for (int frame = 0; frame < vol.t; ++frame)
    for (Eigen::Index i = 0; i < lattice.n; ++i) {
      const auto& c = lattice.coord_of[static_cast<std::size_t>(i)];
      y(frame, i) = vol.data[frame * fs + static_cast<std::size_t>(lattice.raster(c[0], c[1], c[2]))];
    }
  return y;
}

Volume volume_from_field(const MaskedLattice& lattice, const Eigen::Ref<const Eigen::VectorXd>& field,
                         const std::array<double, 3>& origin) {
  if (field.size() != lattice.n)
    throw std::invalid_argument("volume_from_field: field length does not match lattice");
  Volume vol;
  vol.dims = lattice.dims;
  vol.voxel_size = lattice.voxel_size;
  vol.origin = origin;
  vol.t = 1;
  vol.data.assign(vol.frame_size(), 0.0f);
  for (Eigen::Index i = 0; i < lattice.n; ++i) {
    const auto& c = lattice.coord_of[static_cast<std::size_t>(i)];
    vol.data[static_cast<std::size_t>(lattice.raster(c[0], c[1], c[2]))] = static_cast<float>(field[i]);
  }
  return vol;
}

Volume volume_from_series(const MaskedLattice& lattice, const Eigen::Ref<const Eigen::MatrixXd>& series,
                          const std::array<double, 3>& origin) {
  if (series.cols() != lattice.n)
    throw std::invalid_argument("volume_from_series: column count does not match lattice");
  Volume vol;
  vol.dims = lattice.dims;
  vol.voxel_size = lattice.voxel_size;
  vol.origin = origin;
  vol.t = static_cast<int>(series.rows());
  vol.data.assign(vol.frame_size() * static_cast<std::size_t>(vol.t), 0.0f);
  const std::size_t fs = vol.frame_size();
  for (int frame = 0; frame < vol.t; ++frame)
    for (Eigen::Index i = 0; i < lattice.n; ++i) {
      const auto& c = lattice.coord_of[static_cast<std::size_t>(i)];
      vol.data[frame * fs + static_cast<std::size_t>(lattice.raster(c[0], c[1], c[2]))] =
          static_cast<float>(series(frame, i));
    }
  return vol;
}

Eigen::MatrixXd read_design(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_design: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument("trailing");
        row.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {  // header row
        first = false;
        continue;
      }
      throw std::runtime_error("read_design: non-numeric cell outside header in " + path);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("read_design: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("read_design: no data rows in " + path);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return x;
}

}  // namespace ebgmrf
