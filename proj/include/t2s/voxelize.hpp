// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "t2s/voxgrid.hpp"

namespace t2s::voxelize {

using Vec3 = std::array<double, 3>;

struct ColoredMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::int64_t, 3>> triangles;
  std::vector<Rgb> face_colors;
  std::vector<int> face_material;
  std::vector<std::string> material_names;

  std::size_t face_count() const { return triangles.size(); }
  /// Throws InvalidArgument on out-of-range indices or mismatched face arrays.
  void validate() const;
  /// Drops zero-area triangles.
  void remove_degenerate();
  double face_area(std::size_t f) const;
  Vec3 face_normal(std::size_t f) const;  // unit length
};

/// Wavefront OBJ with an optional MTL library: polygons are fan-triangulated
/// and every face takes the diffuse color (Kd) of its active material.
ColoredMesh load_obj(const std::filesystem::path& path);

/// Faces hit first by at least one orthographic ray. Views orbit the mesh
/// centroid at n_views / 2 azimuths and elevations of +30 and -30 degrees;
/// each view casts rays_per_side^2 rays through a square covering the mesh.
std::vector<bool> mark_visible_faces(const ColoredMesh& mesh, int n_views = 24, int rays_per_side = 256);

struct SampleCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;
  std::vector<int> weights;  // 2 when the face normal points away from the centroid, else 1
  std::vector<std::int64_t> source_face;
  std::size_t size() const { return points.size(); }
};

/// Two area-uniform passes of n_samples / 2 each: visible faces first, then
/// every face outside the material with the lowest visible area (only when
/// the mesh has more than one material).
SampleCloud sample_surface(const ColoredMesh& mesh, const std::vector<bool>& visible, std::size_t n_samples,
                           std::uint64_t seed);

/// Maps mesh coordinates to continuous grid coordinates: the bounding box is
/// centered and its longest side spans [margin + 0.5, res - margin - 0.5].
struct GridFrame {
  Vec3 center{};
  double voxel_size = 1.0;
  int resolution = 1;
  Vec3 to_grid(const Vec3& p) const;
};
GridFrame frame_for(const ColoredMesh& mesh, int resolution, int margin = 1);

/// Surface voxelization: occupied iff some sample lands in the voxel; the
/// color comes from the max-weight samples, taking the lower median by HSL hue.
VoxelGrid splat_to_grid(const SampleCloud& cloud, const GridFrame& frame);

/// Marks interior voxels (majority of axis votes, each vote requiring an odd
/// count of surface runs before the voxel and surface beyond it) and colors
/// them from the nearest originally occupied voxel.
VoxelGrid solid_fill(const VoxelGrid& surface);

/// Per-axis inside classification used by solid_fill, exposed for diagnostics.
std::array<std::vector<bool>, 3> axis_votes(const VoxelGrid& surface);

/// Occupancy-normalized Gaussian color filter (sigma 0.5, radius 1) followed
/// by 2x block reductions until the factor is reached. Occupancy of a coarse
/// voxel is the fraction of occupied children, binarized at tau.
VoxelGrid downsample(const VoxelGrid& grid, int factor, double tau = 0.25);

struct VoxelizeOptions {
  int resolution = 32;
  int supersample = 2;      // rasterize at resolution * supersample, then downsample
  bool solid = true;
  int n_views = 24;
  int rays_per_side = 256;
  std::size_t samples = 0;  // 0: (raster_res / 256)^2 * 2e6
  std::uint64_t seed = 0;
  double tau = 0.25;
};

VoxelGrid voxelize_mesh(const ColoredMesh& mesh, const VoxelizeOptions& opts);

}  // namespace t2s::voxelize
