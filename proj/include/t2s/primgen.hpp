// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "t2s/color.hpp"
#include "t2s/voxgrid.hpp"

namespace t2s::primgen {

enum class Shape { kCuboid = 0, kEllipsoid, kCylinder, kCone, kPyramid, kTorus };

inline constexpr int kNumShapes = 6;
inline constexpr int kNumColors = 14;
inline constexpr int kNumSizes = 9;
inline constexpr int kNumConfigs = kNumShapes * kNumColors * kNumSizes;

inline constexpr double kHueNoise = 0.05;
inline constexpr double kSatNoise = 0.10;
inline constexpr double kValNoise = 0.10;
inline constexpr double kScaleNoise = 0.15;

std::string_view shape_name(Shape s);
Shape shape_from_name(std::string_view name);

struct NamedColor {
  std::string name;
  ColorHSV hsv;
  std::vector<std::string> synonyms;  // synonyms[0] == name
};
const std::array<NamedColor, kNumColors>& color_palette();

/// Size index = 3 * height_level + radius_level over the scales {0.2, 0.5, 1.0}.
struct SizeSpec {
  double height_scale;
  double radius_scale;
  int height_level;
  int radius_level;
};
SizeSpec size_spec(int size_index);

struct PrimitiveConfig {
  Shape shape = Shape::kCuboid;
  int color_index = 0;
  int size_index = 0;

  /// Shape-major, then color, then size.
  int index() const {
    return (static_cast<int>(shape) * kNumColors + color_index) * kNumSizes + size_index;
  }
  static PrimitiveConfig from_index(int index);
  friend bool operator==(const PrimitiveConfig&, const PrimitiveConfig&) = default;
};

std::vector<PrimitiveConfig> enumerate_configs();

struct PerturbedInstance {
  PrimitiveConfig config;
  std::array<double, 3> hsv_noise{};    // additive (dh, ds, dv)
  std::array<double, 2> scale_noise{};  // relative (dheight, dradius)
  int sample_index = 0;
};

/// Per-instance RNG is seeded from (global_seed, config index, sample index).
PerturbedInstance perturb(const PrimitiveConfig& config, int sample_index,
                          std::uint64_t global_seed);

Rgb instance_color(const PerturbedInstance& inst);

/// Solid voxelization centered in a res^3 grid with a one-voxel margin.
/// Supported resolutions are 8, 16, 32 and 64.
VoxelGrid rasterize_primitive(const PerturbedInstance& inst, int resolution);

/// Half extents (radius, height) in voxel units realized for an instance.
struct RealizedExtent {
  double radius;
  double height;
};
RealizedExtent realized_extent(const PerturbedInstance& inst, int resolution);

// -- text --------------------------------------------------------------------

inline constexpr int kNumTemplates = 10;
enum class Slot { kLargeness, kTallness, kWideness, kColor, kShape };

struct TextTemplate {
  std::string pattern;  // slots written as ${largeness} etc.
};
const std::array<TextTemplate, kNumTemplates>& text_templates();

/// Synonym list for a slot under a given configuration. Tallness and wideness
/// are empty lists for the middle level (the word is omitted).
std::vector<std::string> slot_lexicon(Slot slot, const PrimitiveConfig& config);

/// At least one description per template (the first-synonym fill), plus
/// `extra_fills_per_template` random fills; duplicates removed, order stable.
std::vector<std::string> generate_descriptions(const PrimitiveConfig& config,
                                               std::uint64_t seed,
                                               int extra_fills_per_template = 2);

// -- dataset -----------------------------------------------------------------

struct DatasetOptions {
  std::filesystem::path out_dir;
  int resolution = 32;
  int samples_per_config = 10;
  std::uint64_t seed = 0;
  int extra_fills_per_template = 2;
  // Optional subsets; empty means all.
  std::vector<int> shapes;
  std::vector<int> colors;
  std::vector<int> sizes;
  // Config-level split fractions (train, val); the rest is test.
  double train_fraction = 0.8;
  double val_fraction = 0.1;
};

/// Selected configurations, honoring the subsets in `opts`.
std::vector<PrimitiveConfig> selected_configs(const DatasetOptions& opts);

/// Writes <out_dir>/voxels/*.t2sv and <out_dir>/manifest.jsonl; returns the manifest path.
std::filesystem::path generate_dataset(const DatasetOptions& opts);

}  // namespace t2s::primgen
