// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "t2s/color.hpp"

namespace t2s {

struct GridDims {
  std::uint32_t x = 1, y = 1, z = 1;
  std::size_t count() const { return std::size_t{x} * y * z; }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Dense colored voxel grid with channels (occupancy, R, G, B), all in [0, 1].
/// Storage is x-major, then y, then z, then channel.
class VoxelGrid {
 public:
  static constexpr int kChannels = 4;

  VoxelGrid() : VoxelGrid(GridDims{}) {}
  explicit VoxelGrid(GridDims dims, double occupancy = 0.0, Rgb rgb = {});
  /// Takes ownership of raw channel data; every value is range checked.
  VoxelGrid(GridDims dims, std::vector<float> data);

  static VoxelGrid cube(std::uint32_t side, double occupancy = 0.0, Rgb rgb = {}) {
    return VoxelGrid({side, side, side}, occupancy, rgb);
  }

  const GridDims& dims() const { return dims_; }
  std::size_t voxel_count() const { return dims_.count(); }
  std::span<const float> data() const { return data_; }

  std::size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return (std::size_t{x} * dims_.y + y) * dims_.z + z;
  }
  float occupancy(std::size_t voxel) const { return data_[voxel * kChannels]; }
  float occupancy(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return occupancy(index(x, y, z));
  }
  Rgb color(std::size_t voxel) const {
    const float* p = &data_[voxel * kChannels];
    return {p[1], p[2], p[3]};
  }
  Rgb color(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return color(index(x, y, z));
  }

  /// Values are clamped to [0, 1].
  void set(std::size_t voxel, double occupancy, const Rgb& rgb);
  void set(std::uint32_t x, std::uint32_t y, std::uint32_t z, double occupancy,
           const Rgb& rgb) {
    set(index(x, y, z), occupancy, rgb);
  }

  /// Copy with RGB zeroed wherever occupancy is 0.
  VoxelGrid canonicalized() const;
  /// Copy with occupancy binarized to {0, 1} (occupied iff > threshold), canonicalized.
  VoxelGrid thresholded(double threshold) const;
  std::size_t occupied_count(double threshold = 0.5) const;

  friend bool operator==(const VoxelGrid& a, const VoxelGrid& b);

 private:
  GridDims dims_;
  std::vector<float> data_;
};

/// T2SV binary format: magic "T2SV", u16 version, three u32 dims, u8 channel
/// count, one reserved byte, then little-endian f32 payload in grid layout.
inline constexpr std::uint16_t kGridFormatVersion = 1;
inline constexpr std::size_t kGridHeaderBytes = 20;
inline constexpr std::size_t kMaxGridVoxels = std::size_t{1} << 30;

void write_grid(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid read_grid(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_grid(const VoxelGrid& grid);
VoxelGrid decode_grid(std::span<const std::uint8_t> bytes);

}  // namespace t2s
