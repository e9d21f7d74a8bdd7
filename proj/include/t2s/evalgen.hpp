// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "t2s/cwgan.hpp"
#include "t2s/diff/nn.hpp"
#include "t2s/voxgrid.hpp"

namespace t2s {

/// Occupied iff occupancy > threshold. Two empty grids have IoU 1.
double iou(const VoxelGrid& generated, const VoxelGrid& truth, double threshold = 0.9);

/// Normalized hue x saturation histogram. Bin (h, s) lives at h * sat_bins + s.
struct ColorHistogram {
  int hue_bins = 8;
  int sat_bins = 8;
  std::vector<double> bins;

  std::size_t size() const { return bins.size(); }
  /// Circular L1 on the hue index plus L1 on the saturation index.
  double ground_distance(std::size_t a, std::size_t b) const;
  /// Throws InvalidArgument unless bins are nonnegative and sum to 1 within 1e-9.
  void validate() const;
};

/// Histogram over voxels with occupancy > threshold; nullopt for an empty grid.
std::optional<ColorHistogram> color_histogram(const VoxelGrid& grid, double threshold = 0.9, int hue_bins = 8,
                                              int sat_bins = 8);

/// Exact transport cost between two histograms of equal geometry.
double color_emd(const ColorHistogram& a, const ColorHistogram& b);

/// exp(mean KL(p(y|x) || p(y))) with probabilities floored at 1e-12 inside logs.
double inception_score(const std::vector<std::vector<double>>& class_probs);

struct ClassifierConfig {
  std::vector<std::string> classes;
  std::int64_t resolution = 8;
  std::int64_t width = 16;
  std::int64_t steps = 300;
  std::int64_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

/// Two stride-2 convolutions, global average pooling and a linear head.
class ShapeClassifier {
 public:
  explicit ShapeClassifier(const ClassifierConfig& config);

  const ClassifierConfig& config() const { return config_; }
  diff::ParamStore& store() { return store_; }
  const diff::ParamStore& store() const { return store_; }
  std::size_t num_classes() const { return config_.classes.size(); }
  std::int64_t class_index(const std::string& name) const;

  diff::Tensor logits(const diff::Tensor& grids) const;
  /// Softmax posteriors, one row per grid.
  std::vector<std::vector<double>> predict_proba(const std::vector<VoxelGrid>& grids) const;
  std::vector<std::int64_t> predict(const std::vector<VoxelGrid>& grids) const;

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<ShapeClassifier> load(const std::filesystem::path& path);

 private:
  ClassifierConfig config_;
  diff::ParamStore store_;
  diff::Conv3d conv1_, conv2_;
  diff::Linear head_;
};

/// Cross-entropy training on labeled grids. Labels index config.classes.
std::unique_ptr<ShapeClassifier> train_classifier(const std::vector<VoxelGrid>& grids,
                                                  const std::vector<std::int64_t>& labels,
                                                  const ClassifierConfig& config);

/// Fraction of grids whose predicted class equals the condition class.
double class_accuracy(const std::vector<VoxelGrid>& generated, const std::vector<std::int64_t>& condition_classes,
                      const ShapeClassifier& classifier);

struct GenerationSample {
  VoxelGrid generated;
  VoxelGrid truth;
  std::string category;  // classifier class of the conditioning shape
};

struct GenerationEvalOptions {
  double occupancy_threshold = 0.9;
  std::uint64_t seed = 0;
  std::int64_t descriptions_per_shape = 1;
};

/// Mean IoU, inception score, mean color EMD and class accuracy. Pairs where
/// either side has no occupied voxel are left out of the EMD mean and counted.
nlohmann::json generation_metrics(const std::vector<GenerationSample>& samples, const ShapeClassifier& classifier,
                                  double occupancy_threshold = 0.9);

/// Generates one sample per description (up to descriptions_per_shape) of every
/// shape in `data` and scores it against that shape.
nlohmann::json evaluate_generation(const GanModel& model, const GanDataset& data, const ShapeClassifier& classifier,
                                   const GenerationEvalOptions& options);

}  // namespace t2s
