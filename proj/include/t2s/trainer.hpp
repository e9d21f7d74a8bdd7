// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "t2s/diff/checkpoint.hpp"
#include "t2s/encoders.hpp"
#include "t2s/jointloss.hpp"
#include "t2s/manifest.hpp"

namespace t2s {

/// Shapes of one split with their grids and tokenized descriptions.
struct EmbeddingDataset {
  std::vector<ShapeRecord> records;
  std::vector<VoxelGrid> grids;
  std::vector<std::vector<std::vector<std::int64_t>>> tokens;  // [shape][description]
  Labels classes;                                               // instance class per shape

  std::size_t size() const { return records.size(); }
  std::size_t num_classes() const;
};

/// Loads the records of `split` (all records when empty). Descriptions longer
/// than the token limit are dropped; shapes left without descriptions are skipped.
EmbeddingDataset load_embedding_dataset(const std::filesystem::path& manifest, const std::string& split,
                                        const Vocabulary& vocab);

/// Collects every description of the records of `split` for vocabulary building.
std::vector<std::string> description_corpus(const std::vector<ShapeRecord>& records, const std::string& split);

struct BatchSpec {
  std::int64_t shapes_per_batch = 100;
  std::int64_t captions_per_shape = 2;
  std::uint64_t seed = 0;
};

struct EmbeddingBatch {
  std::vector<std::size_t> shapes;                     // dataset indices, n
  std::vector<std::vector<std::int64_t>> descriptions;  // m = n * captions_per_shape
  Labels shape_class, text_class;
};

/// Deterministic in (spec.seed, step). Shapes come from distinct classes
/// whenever the dataset has enough classes.
EmbeddingBatch sample_batch(const EmbeddingDataset& data, const BatchSpec& spec, std::int64_t step);

struct TrainConfig {
  std::string mode = "full";
  std::int64_t steps = 1000;
  BatchSpec batch;
  double lr = 1e-4;
  std::int64_t log_every = 10;
  LossConfig loss;
  EncoderConfig encoder;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Text and shape encoders sharing one parameter store.
struct EmbeddingModel {
  explicit EmbeddingModel(const EncoderConfig& config, std::uint64_t seed);
  EncoderConfig config;
  diff::ParamStore store;
  std::unique_ptr<TextEncoder> text;
  std::unique_ptr<ShapeEncoder> shape;

  /// Eval-mode embeddings as plain row-major [rows, embed_dim] arrays.
  std::vector<double> embed_texts(const std::vector<std::vector<std::int64_t>>& texts,
                                  std::size_t chunk = 256) const;
  std::vector<double> embed_shapes(const std::vector<VoxelGrid>& grids, std::size_t chunk = 64) const;
};

struct TrainResult {
  std::shared_ptr<EmbeddingModel> model;
  std::vector<std::int64_t> logged_steps;
  std::vector<double> total_loss;
  std::int64_t steps_done = 0;
};

struct TrainArtifacts {
  std::filesystem::path checkpoint;          // written at the end (and on divergence)
  std::filesystem::path loss_csv;            // optional
  std::optional<std::filesystem::path> resume;
};

/// Trains both encoders with the configured ablation mode. On a non-finite
/// loss or gradient the last good state is checkpointed and DivergenceError
/// is rethrown.
TrainResult train_embedding(const EmbeddingDataset& data, const Vocabulary& vocab, const TrainConfig& config,
                            const TrainArtifacts& out);

void save_embedding_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model,
                               const diff::Adam* optimizer, const Vocabulary& vocab, const TrainConfig& config,
                               const TrainResult& result);

struct LoadedEmbedding {
  std::unique_ptr<EmbeddingModel> model;
  Vocabulary vocab;
  TrainConfig config;
  diff::Checkpoint checkpoint;
};

LoadedEmbedding load_embedding_checkpoint(const std::filesystem::path& path);

}  // namespace t2s
