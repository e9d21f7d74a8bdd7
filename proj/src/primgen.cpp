// SPDX-License-Identifier: Apache-2.0
#include "t2s/primgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "t2s/error.hpp"
#include "t2s/manifest.hpp"
#include "t2s/rng.hpp"

namespace t2s::primgen {
namespace {

constexpr std::array<std::string_view, kNumShapes> kShapeNames = {
    "cuboid", "ellipsoid", "cylinder", "cone", "pyramid", "torus"};

constexpr double kScaleLevels[3] = {0.2, 0.5, 1.0};

// Normalized inside measure: the voxel center p is inside iff measure <= 1.
double inside_measure(Shape shape, double x, double y, double z, double rr, double hh) {
  const double inf = std::numeric_limits<double>::infinity();
  const double rho = std::sqrt(x * x + y * y);
  switch (shape) {
    case Shape::kCuboid:
      return std::max({std::abs(x) / rr, std::abs(y) / rr, std::abs(z) / hh});
    case Shape::kEllipsoid:
      return std::sqrt((x * x + y * y) / (rr * rr) + z * z / (hh * hh));
    case Shape::kCylinder:
      return std::max(rho / rr, std::abs(z) / hh);
    case Shape::kCone:
    case Shape::kPyramid: {
      // Base at z = -hh, apex at z = +hh.
      const double allowed = rr * (hh - z) / (2.0 * hh);
      const double radial = shape == Shape::kCone ? rho : std::max(std::abs(x), std::abs(y));
      const double lateral = allowed > 0.0 ? radial / allowed : (radial > 0.0 ? inf : 1.0);
      return std::max(std::abs(z) / hh, lateral);
    }
    case Shape::kTorus: {
      // Ring in the xy plane; tube half-width rr/3 radially, hh vertically.
      const double tube = rr / 3.0;
      const double ring = rr - tube;
      const double dr = (rho - ring) / tube;
      const double dz = z / hh;
      return std::sqrt(dr * dr + dz * dz);
    }
  }
  return inf;
}

std::string fill_template(const std::string& pattern, const std::array<std::string, 5>& words) {
  static const std::array<std::string, 5> kKeys = {"${largeness}", "${tallness}", "${wideness}",
                                                   "${color}", "${shape}"};
  std::string out = pattern;
  for (std::size_t k = 0; k < kKeys.size(); ++k) {
    std::size_t pos;
    while ((pos = out.find(kKeys[k])) != std::string::npos) {
      out.replace(pos, kKeys[k].size(), words[k]);
    }
  }
  // Collapse the double spaces left by omitted words.
  std::istringstream is(out);
  std::string word, joined;
  while (is >> word) {
    if (!joined.empty()) joined += ' ';
    joined += word;
  }
  return joined;
}

template <typename T>
bool selected(const std::vector<int>& subset, T v) {
  return subset.empty() || std::find(subset.begin(), subset.end(), static_cast<int>(v)) != subset.end();
}

}  // namespace

std::string_view shape_name(Shape s) { return kShapeNames[static_cast<int>(s)]; }

Shape shape_from_name(std::string_view name) {
  for (int i = 0; i < kNumShapes; ++i) {
    if (kShapeNames[i] == name) return static_cast<Shape>(i);
  }
  throw InvalidArgument("unknown primitive shape: " + std::string(name));
}

const std::array<NamedColor, kNumColors>& color_palette() {
  static const std::array<NamedColor, kNumColors> kPalette = {{
      {"red", {0.0, 1.0, 1.0}, {"red", "crimson", "scarlet"}},
      {"orange", {0.08, 1.0, 1.0}, {"orange", "tangerine", "amber"}},
      {"yellow", {0.16, 1.0, 1.0}, {"yellow", "golden", "lemon"}},
      {"lime", {0.25, 1.0, 1.0}, {"lime", "chartreuse"}},
      {"green", {0.36, 1.0, 0.75}, {"green", "jade", "emerald"}},
      {"cyan", {0.5, 1.0, 1.0}, {"cyan", "aqua", "turquoise"}},
      {"blue", {0.64, 1.0, 1.0}, {"blue", "navy", "azure"}},
      {"purple", {0.76, 1.0, 0.8}, {"purple", "violet"}},
      {"magenta", {0.85, 1.0, 1.0}, {"magenta", "fuchsia"}},
      {"pink", {0.95, 0.45, 1.0}, {"pink", "rose"}},
      {"brown", {0.07, 0.75, 0.5}, {"brown", "chocolate"}},
      {"white", {0.0, 0.0, 1.0}, {"white", "ivory", "snow"}},
      {"gray", {0.0, 0.0, 0.5}, {"gray", "grey", "silver"}},
      {"black", {0.0, 0.0, 0.12}, {"black", "ebony", "jet"}},
  }};
  return kPalette;
}

SizeSpec size_spec(int size_index) {
  if (size_index < 0 || size_index >= kNumSizes) {
    throw InvalidArgument("size index out of range: " + std::to_string(size_index));
  }
  const int h = size_index / 3;
  const int r = size_index % 3;
  return {kScaleLevels[h], kScaleLevels[r], h, r};
}

PrimitiveConfig PrimitiveConfig::from_index(int index) {
  if (index < 0 || index >= kNumConfigs) {
    throw InvalidArgument("config index out of range: " + std::to_string(index));
  }
  PrimitiveConfig c;
  c.size_index = index % kNumSizes;
  c.color_index = (index / kNumSizes) % kNumColors;
  c.shape = static_cast<Shape>(index / (kNumSizes * kNumColors));
  return c;
}

std::vector<PrimitiveConfig> enumerate_configs() {
  std::vector<PrimitiveConfig> out;
  out.reserve(kNumConfigs);
  for (int i = 0; i < kNumConfigs; ++i) out.push_back(PrimitiveConfig::from_index(i));
  return out;
}

PerturbedInstance perturb(const PrimitiveConfig& config, int sample_index,
                          std::uint64_t global_seed) {
  Rng rng(hash_seed({global_seed, static_cast<std::uint64_t>(config.index()),
                     static_cast<std::uint64_t>(sample_index)}));
  PerturbedInstance inst;
  inst.config = config;
  inst.sample_index = sample_index;
  inst.hsv_noise = {rng.uniform(-kHueNoise, kHueNoise), rng.uniform(-kSatNoise, kSatNoise),
                    rng.uniform(-kValNoise, kValNoise)};
  inst.scale_noise = {rng.uniform(-kScaleNoise, kScaleNoise),
                      rng.uniform(-kScaleNoise, kScaleNoise)};
  return inst;
}

Rgb instance_color(const PerturbedInstance& inst) {
  const auto& base = color_palette()[inst.config.color_index].hsv;
  ColorHSV hsv;
  hsv.h = wrap_hue(base.h + inst.hsv_noise[0]);
  hsv.s = std::clamp(base.s + inst.hsv_noise[1], 0.0, 1.0);
  hsv.v = std::clamp(base.v + inst.hsv_noise[2], 0.0, 1.0);
  return hsv_to_rgb(hsv);
}

RealizedExtent realized_extent(const PerturbedInstance& inst, int resolution) {
  // The largest perturbed scale (1 + kScaleNoise) exactly fills the grid minus margin.
  const double available = resolution / 2.0 - 1.0;
  const double unit = available / (1.0 + kScaleNoise);
  const SizeSpec size = size_spec(inst.config.size_index);
  return {unit * size.radius_scale * (1.0 + inst.scale_noise[1]),
          unit * size.height_scale * (1.0 + inst.scale_noise[0])};
}

VoxelGrid rasterize_primitive(const PerturbedInstance& inst, int resolution) {
  if (resolution != 8 && resolution != 16 && resolution != 32 && resolution != 64) {
    throw InvalidArgument("unsupported primitive resolution " + std::to_string(resolution));
  }
  const auto res = static_cast<std::uint32_t>(resolution);
  VoxelGrid grid = VoxelGrid::cube(res);
  const Rgb rgb = instance_color(inst);
  const auto [rr, hh] = realized_extent(inst, resolution);
  const double half = resolution / 2.0;

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_voxel = 0;
  std::size_t filled = 0;
  for (std::uint32_t i = 0; i < res; ++i) {
    const double x = i + 0.5 - half;
    for (std::uint32_t j = 0; j < res; ++j) {
      const double y = j + 0.5 - half;
      for (std::uint32_t k = 0; k < res; ++k) {
        const double z = k + 0.5 - half;
        const double m = inside_measure(inst.config.shape, x, y, z, rr, hh);
        const std::size_t v = grid.index(i, j, k);
        if (m <= 1.0) {
          grid.set(v, 1.0, rgb);
          ++filled;
        }
        if (m < best) {
          best = m;
          best_voxel = v;
        }
      }
    }
  }
  // Sub-voxel primitives still produce their most-inside voxel.
  if (filled == 0) grid.set(best_voxel, 1.0, rgb);
  return grid;
}

const std::array<TextTemplate, kNumTemplates>& text_templates() {
  static const std::array<TextTemplate, kNumTemplates> kTemplates = {{
      {"a ${largeness} ${tallness} ${wideness} ${color} ${shape}"},
      {"the ${shape} is ${largeness} ${tallness} ${wideness} ${color}"},
      {"the ${color} ${shape} is ${largeness} ${tallness} ${wideness}"},
      {"a ${largeness} ${color} ${tallness} ${wideness} ${shape}"},
      {"the ${wideness} ${color} ${shape} is ${largeness} ${tallness}"},
      {"the ${largeness} ${tallness} ${wideness} ${shape} is ${color}"},
      {"a ${color} ${shape} that is ${largeness} ${tallness} ${wideness}"},
      {"this ${shape} is ${color} and ${largeness} ${tallness} ${wideness}"},
      {"${largeness} ${tallness} ${wideness} ${shape} colored ${color}"},
      {"there is a ${largeness} ${tallness} ${wideness} ${color} ${shape}"},
  }};
  return kTemplates;
}

std::vector<std::string> slot_lexicon(Slot slot, const PrimitiveConfig& config) {
  const SizeSpec size = size_spec(config.size_index);
  switch (slot) {
    case Slot::kLargeness:
      if (size.height_level + size.radius_level <= 1) return {"small", "little", "tiny"};
      return {"large", "big"};
    case Slot::kTallness:
      if (size.height_level == 0) return {"short", "squat", "low"};
      if (size.height_level == 2) return {"tall", "high"};
      return {};
    case Slot::kWideness:
      if (size.radius_level == 0) return {"narrow", "thin", "skinny"};
      if (size.radius_level == 2) return {"wide", "broad"};
      return {};
    case Slot::kColor:
      return color_palette()[config.color_index].synonyms;
    case Slot::kShape:
      switch (config.shape) {
        case Shape::kCuboid: return {"box", "cuboid", "rectangular shape"};
        case Shape::kEllipsoid: return {"sphere", "ball", "spherical shape"};
        case Shape::kCylinder: return {"cylinder", "cylindrical shape", "tube"};
        case Shape::kCone: return {"cone", "conical shape"};
        case Shape::kPyramid: return {"pyramid", "pyramidal shape"};
        case Shape::kTorus: return {"torus", "ring", "donut"};
      }
  }
  return {};
}

std::vector<std::string> generate_descriptions(const PrimitiveConfig& config, std::uint64_t seed,
                                               int extra_fills_per_template) {
  std::array<std::vector<std::string>, 5> lex;
  for (int s = 0; s < 5; ++s) lex[s] = slot_lexicon(static_cast<Slot>(s), config);

  auto pick = [&](int slot, Rng* rng) -> std::string {
    const auto& words = lex[slot];
    if (words.empty()) return {};
    return rng ? words[rng->below(words.size())] : words.front();
  };

  std::vector<std::string> out;
  std::set<std::string> seen;
  const auto& templates = text_templates();
  for (int t = 0; t < kNumTemplates; ++t) {
    Rng rng(hash_seed({seed, static_cast<std::uint64_t>(config.index()),
                       static_cast<std::uint64_t>(t)}));
    for (int f = 0; f <= extra_fills_per_template; ++f) {
      std::array<std::string, 5> words;
      for (int s = 0; s < 5; ++s) words[s] = pick(s, f == 0 ? nullptr : &rng);
      std::string text = fill_template(templates[t].pattern, words);
      if (seen.insert(text).second) out.push_back(std::move(text));
    }
  }
  return out;
}

std::vector<PrimitiveConfig> selected_configs(const DatasetOptions& opts) {
  std::vector<PrimitiveConfig> out;
  for (const auto& c : enumerate_configs()) {
    if (selected(opts.shapes, c.shape) && selected(opts.colors, c.color_index) &&
        selected(opts.sizes, c.size_index)) {
      out.push_back(c);
    }
  }
  return out;
}

std::filesystem::path generate_dataset(const DatasetOptions& opts) {
  if (opts.samples_per_config < 1) throw InvalidArgument("samples_per_config must be >= 1");
  const auto configs = selected_configs(opts);
  if (configs.empty()) throw InvalidArgument("subset selects no configurations");

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(opts.out_dir / "voxels", ec);
  if (ec) throw IoError("cannot create " + (opts.out_dir / "voxels").string() + ": " + ec.message());

  // Config-level split: shuffled config order, then train / val / test prefixes.
  std::vector<std::size_t> order(configs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(hash_seed({opts.seed, 0x5917ULL}));
  split_rng.shuffle(order.begin(), order.end());
  const auto n = configs.size();
  const auto n_train = static_cast<std::size_t>(std::llround(opts.train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::llround(opts.val_fraction * n));
  std::vector<std::string> split(n);
  for (std::size_t r = 0; r < n; ++r) {
    split[order[r]] = r < n_train ? "train" : (r < n_train + n_val ? "val" : "test");
  }

  std::vector<ShapeRecord> records;
  records.reserve(n * opts.samples_per_config);
  for (std::size_t ci = 0; ci < n; ++ci) {
    const auto& config = configs[ci];
    const auto descriptions =
        generate_descriptions(config, opts.seed, opts.extra_fills_per_template);
    for (int s = 0; s < opts.samples_per_config; ++s) {
      const auto inst = perturb(config, s, opts.seed);
      const auto grid = rasterize_primitive(inst, opts.resolution);
      char name[64];
      std::snprintf(name, sizeof(name), "prim_%03d_%02d", config.index(), s);
      const std::string rel = std::string("voxels/") + name + ".t2sv";
      write_grid(grid, opts.out_dir / rel);

      ShapeRecord rec;
      rec.id = name;
      rec.category = std::string(shape_name(config.shape));
      rec.instance_class = config.index();
      rec.descriptions = descriptions;
      rec.voxel_path = rel;
      rec.split = split[ci];
      rec.extra["color_index"] = config.color_index;
      rec.extra["size_index"] = config.size_index;
      rec.extra["sample_index"] = s;
      rec.extra["hsv_noise"] = inst.hsv_noise;
      rec.extra["scale_noise"] = inst.scale_noise;
      records.push_back(std::move(rec));
    }
  }
  const auto manifest = opts.out_dir / "manifest.jsonl";
  write_manifest(manifest, records);
  return manifest;
}

}  // namespace t2s::primgen
