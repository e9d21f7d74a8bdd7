// SPDX-License-Identifier: Apache-2.0
#include "t2s/voxgrid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "t2s/error.hpp"

namespace t2s {
namespace {

constexpr char kMagic[4] = {'T', '2', 'S', 'V'};

void check_dims(const GridDims& d) {
  if (d.x == 0 || d.y == 0 || d.z == 0) {
    throw InvalidArgument("voxel grid dims must all be >= 1");
  }
}

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw InvalidArgument(std::string(what) + " must lie in [0, 1]");
  }
}

template <typename T>
void store_le(std::uint8_t* dst, T v) {
  std::memcpy(dst, &v, sizeof(T));
}

template <typename T>
T load_le(const std::uint8_t* src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

}  // namespace

VoxelGrid::VoxelGrid(GridDims dims, double occupancy, Rgb rgb) : dims_(dims) {
  check_dims(dims);
  check_unit(occupancy, "occupancy");
  check_unit(rgb.r, "red");
  check_unit(rgb.g, "green");
  check_unit(rgb.b, "blue");
  data_.resize(dims.count() * kChannels);
  for (std::size_t v = 0; v < dims.count(); ++v) {
    float* p = &data_[v * kChannels];
    p[0] = static_cast<float>(occupancy);
    p[1] = static_cast<float>(rgb.r);
    p[2] = static_cast<float>(rgb.g);
    p[3] = static_cast<float>(rgb.b);
  }
}

VoxelGrid::VoxelGrid(GridDims dims, std::vector<float> data)
    : dims_(dims), data_(std::move(data)) {
  check_dims(dims);
  if (data_.size() != dims.count() * kChannels) {
    throw InvalidArgument("voxel grid data size does not match dims");
  }
  for (float v : data_) check_unit(v, "voxel channel");
}

void VoxelGrid::set(std::size_t voxel, double occupancy, const Rgb& rgb) {
  float* p = &data_[voxel * kChannels];
  p[0] = static_cast<float>(std::clamp(occupancy, 0.0, 1.0));
  p[1] = static_cast<float>(std::clamp(rgb.r, 0.0, 1.0));
  p[2] = static_cast<float>(std::clamp(rgb.g, 0.0, 1.0));
  p[3] = static_cast<float>(std::clamp(rgb.b, 0.0, 1.0));
}

VoxelGrid VoxelGrid::canonicalized() const {
  VoxelGrid out = *this;
  for (std::size_t v = 0; v < voxel_count(); ++v) {
    float* p = &out.data_[v * kChannels];
    if (p[0] == 0.0f) p[1] = p[2] = p[3] = 0.0f;
  }
  return out;
}

VoxelGrid VoxelGrid::thresholded(double threshold) const {
  VoxelGrid out = *this;
  for (std::size_t v = 0; v < voxel_count(); ++v) {
    float* p = &out.data_[v * kChannels];
    p[0] = p[0] > threshold ? 1.0f : 0.0f;
    if (p[0] == 0.0f) p[1] = p[2] = p[3] = 0.0f;
  }
  return out;
}

std::size_t VoxelGrid::occupied_count(double threshold) const {
  std::size_t n = 0;
  for (std::size_t v = 0; v < voxel_count(); ++v) {
    if (occupancy(v) > threshold) ++n;
  }
  return n;
}

bool operator==(const VoxelGrid& a, const VoxelGrid& b) {
  return a.dims_ == b.dims_ &&
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_grid(const VoxelGrid& grid) {
  const auto& d = grid.dims();
  const auto payload = grid.data();
  std::vector<std::uint8_t> out(kGridHeaderBytes + payload.size_bytes());
  std::memcpy(out.data(), kMagic, 4);
  store_le<std::uint16_t>(&out[4], kGridFormatVersion);
  store_le<std::uint32_t>(&out[6], d.x);
  store_le<std::uint32_t>(&out[10], d.y);
  store_le<std::uint32_t>(&out[14], d.z);
  out[18] = static_cast<std::uint8_t>(VoxelGrid::kChannels);
  out[19] = 0;
  std::memcpy(&out[kGridHeaderBytes], payload.data(), payload.size_bytes());
  return out;
}

VoxelGrid decode_grid(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kGridHeaderBytes) {
    throw TruncatedError("T2SV header truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad T2SV magic");
  }
  const auto version = load_le<std::uint16_t>(&bytes[4]);
  if (version != kGridFormatVersion) {
    throw FormatError("unsupported T2SV version " + std::to_string(version));
  }
  const GridDims dims{load_le<std::uint32_t>(&bytes[6]), load_le<std::uint32_t>(&bytes[10]),
                      load_le<std::uint32_t>(&bytes[14])};
  const unsigned channels = bytes[18];
  if (channels != VoxelGrid::kChannels) {
    throw FormatError("T2SV channel count must be 4, got " + std::to_string(channels));
  }
  if (dims.x == 0 || dims.y == 0 || dims.z == 0) {
    throw FormatError("T2SV dims must be >= 1");
  }
  // Checked product so that hostile headers cannot wrap around.
  const unsigned __int128 voxels =
      static_cast<unsigned __int128>(dims.x) * dims.y * dims.z;
  if (voxels > kMaxGridVoxels) {
    throw DimensionOverflowError("T2SV dims exceed the supported voxel count");
  }
  const std::size_t n_floats = static_cast<std::size_t>(voxels) * channels;
  const std::size_t need = kGridHeaderBytes + n_floats * sizeof(float);
  if (bytes.size() < need) {
    throw TruncatedError("T2SV payload truncated: expected " + std::to_string(need) +
                         " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > need) {
    throw FormatError("T2SV file has trailing bytes");
  }
  std::vector<float> data(n_floats);
  std::memcpy(data.data(), &bytes[kGridHeaderBytes], n_floats * sizeof(float));
  for (float v : data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw FormatError("T2SV value outside [0, 1]");
  }
  return VoxelGrid(dims, std::move(data));
}

void write_grid(const VoxelGrid& grid, const std::filesystem::path& path) {
  const auto bytes = encode_grid(grid);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

VoxelGrid read_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_grid(bytes);
}

}  // namespace t2s
