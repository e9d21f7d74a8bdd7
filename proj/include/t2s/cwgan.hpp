// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "t2s/diff/checkpoint.hpp"
#include "t2s/diff/nn.hpp"
#include "t2s/trainer.hpp"

namespace t2s {

struct GanConfig {
  std::int64_t resolution = 8;
  std::int64_t channel_divisor = 8;
  std::int64_t embed_dim = 128;
  std::int64_t noise_dim = 16;
  double noise_half_width = 0.5;
  double lambda_gp = 10.0;
  std::int64_t warmup_generator_iters = 25;
  std::int64_t warmup_critic_steps = 100;
  std::int64_t critic_steps = 5;
  std::int64_t generator_steps = 2000;
  std::int64_t batch_size = 32;
  double lr = 5e-5;
  double decay_rate = 0.95;
  std::int64_t decay_steps = 10000;
  double beta1 = 0.5;
  double beta2 = 0.9;
  std::uint64_t seed = 0;
  std::int64_t log_every = 10;

  /// Critic updates preceding generator iteration `g` (0-based).
  std::int64_t critic_steps_before(std::int64_t g) const {
    return g < warmup_generator_iters ? warmup_critic_steps : critic_steps;
  }
  nlohmann::json to_json() const;
  static GanConfig from_json(const nlohmann::json& j);
};

/// fc -> transposed-conv stack -> 4 channels through a sigmoid, with batch
/// norm and ReLU on every hidden stage.
class Generator {
 public:
  Generator(diff::ParamStore& store, const GanConfig& config, Rng& rng);
  /// text: [N, embed_dim], noise: [N, noise_dim] -> [N, 4, R, R, R]. Training
  /// mode normalizes with batch statistics and updates the running buffers.
  diff::Tensor operator()(const diff::Tensor& text, const diff::Tensor& noise, bool training = false) const;

 private:
  GanConfig config_;
  std::int64_t base_channels_ = 0, base_res_ = 0;
  diff::Linear fc_;
  std::vector<diff::ConvTranspose3d> stages_;
  std::vector<diff::BatchNorm> norms_;  // one per stage but the last, plus fc
};

/// Leaky-ReLU conv stack over the shape, two fc layers over the text,
/// concatenation, then fc layers to a scalar. No normalization layers.
class Critic {
 public:
  Critic(diff::ParamStore& store, const GanConfig& config, Rng& rng);
  /// [N, embed_dim] x [N, 4, R, R, R] -> [N, 1].
  diff::Tensor operator()(const diff::Tensor& text, const diff::Tensor& shape) const;
  /// Names of all layers, for structural checks.
  const std::vector<std::string>& layer_names() const { return layer_names_; }

 private:
  std::vector<diff::Conv3d> convs_;
  diff::Linear text1_, text2_, fc6_, fc7_, fc8_;
  std::int64_t flat_ = 0;
  std::vector<std::string> layer_names_;
};

using CriticFn = std::function<diff::Tensor(const diff::Tensor& text, const diff::Tensor& shape)>;

/// Mean over GP samples of (||grad_text D|| - 1)^2 + (||grad_shape D|| - 1)^2,
/// differentiable with respect to the critic parameters.
diff::Tensor gradient_penalty(const CriticFn& critic, const diff::Tensor& text, const diff::Tensor& shape);

struct CriticBatch {
  diff::Tensor fake_text, fake_shape;          // (t, G(t))
  diff::Tensor mismatch_text, mismatch_shape;  // (t~, s~)
  diff::Tensor match_text, match_shape;        // (t^, s^)
  diff::Tensor gp_text, gp_shape;              // (t-, s-)
};

struct CriticLoss {
  diff::Tensor total;
  double fake_mean = 0, mismatch_mean = 0, match_mean = 0, penalty = 0;
  double wasserstein() const { return match_mean - fake_mean; }
};

/// E[D(fake)] + E[D(mismatch)] - 2 E[D(match)] + lambda_gp * GP.
CriticLoss critic_loss(const CriticFn& critic, const CriticBatch& batch, double lambda_gp);

/// -E[D(t, G(t))].
diff::Tensor generator_loss(const CriticFn& critic, const diff::Tensor& text, const diff::Tensor& generated);

/// Shapes with frozen per-description text embeddings.
struct GanDataset {
  std::vector<VoxelGrid> grids;
  Labels classes;
  std::vector<std::vector<std::vector<double>>> text_embeddings;  // [shape][description][dim]
  std::vector<ShapeRecord> records;
  std::int64_t embed_dim = 0;
};

GanDataset make_gan_dataset(const EmbeddingDataset& data, const EmbeddingModel& encoder);

struct GanSample {
  std::vector<std::size_t> match_shape, match_text_shape, match_text_index;
  std::vector<std::size_t> mismatch_shape, mismatch_text_shape, mismatch_text_index;
  std::vector<std::size_t> gen_text_shape, gen_text_index;
};

/// Matching pairs, mismatching pairs (description with a uniformly random
/// shape of another class) and generator texts drawn from the description
/// marginal. Throws InvalidArgument for single-class datasets.
GanSample sample_gan_batch(const GanDataset& data, std::int64_t batch_size, Rng& rng);

diff::Tensor noise_tensor(std::int64_t n, const GanConfig& config, Rng& rng);

struct GanModel {
  explicit GanModel(const GanConfig& config);
  GanConfig config;
  diff::ParamStore gen_store, critic_store;
  std::unique_ptr<Generator> generator;
  std::unique_ptr<Critic> critic;
};

struct GanLog {
  std::vector<std::int64_t> generator_step;
  std::vector<double> wasserstein;  // mean over the critic steps preceding each generator step
  std::vector<double> critic_loss, generator_loss;
};

struct GanTrainResult {
  std::shared_ptr<GanModel> model;
  GanLog log;
};

GanTrainResult train_gan(const GanDataset& data, const GanConfig& config, const std::filesystem::path& out_ckpt,
                         const std::filesystem::path& log_csv = {});

void save_gan_checkpoint(const std::filesystem::path& path, const GanModel& model, const GanLog& log);
std::shared_ptr<GanModel> load_gan_checkpoint(const std::filesystem::path& path);

/// n samples for one conditioning embedding, independent noise, deterministic in seed.
std::vector<VoxelGrid> generate(const GanModel& model, const std::vector<double>& embedding, std::int64_t n,
                                std::uint64_t seed);

/// Packs a [N, 4, R, R, R] tensor back into grids (values clamped to [0, 1]).
std::vector<VoxelGrid> tensor_to_grids(const diff::Tensor& t);

}  // namespace t2s
