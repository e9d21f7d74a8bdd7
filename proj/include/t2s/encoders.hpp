// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "t2s/diff/nn.hpp"
#include "t2s/voxgrid.hpp"

namespace t2s {

/// Lowercases, replaces every non-alphanumeric byte with a space and splits.
std::vector<std::string> tokenize(std::string_view text);

inline constexpr std::size_t kMaxDescriptionTokens = 96;

class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;

  /// Tokens seen fewer than `min_count` times in `corpus` map to UNK.
  static Vocabulary build(const std::vector<std::string>& corpus, std::int64_t min_count = 3);

  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }
  std::int64_t lookup(const std::string& token) const;
  const std::string& token(std::int64_t index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  std::int64_t count(std::int64_t index) const { return counts_.at(static_cast<std::size_t>(index)); }
  std::int64_t min_count() const { return min_count_; }

  /// Token indices of `text`; throws InvalidArgument beyond kMaxDescriptionTokens.
  std::vector<std::int64_t> encode(std::string_view text) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void push(std::string token, std::int64_t count);
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> counts_;
  std::map<std::string, std::int64_t> index_;
  std::int64_t min_count_ = 3;
};

struct Description {
  std::vector<std::int64_t> tokens;
  std::int64_t instance_class = 0;
  std::string raw_text;
};

struct EncoderConfig {
  std::string text_kind = "mean_mlp";  // or "cnn_gru"
  std::string shape_kind = "compact";  // or "deep"
  std::int64_t vocab_size = 2;
  std::int64_t word_dim = 128;
  std::int64_t mlp_hidden = 256;
  std::int64_t gru_hidden = 256;
  std::int64_t embed_dim = 128;
  std::int64_t resolution = 16;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

/// Packs grids into an [N, 4, X, Y, Z] tensor (channel-first).
diff::Tensor grids_to_tensor(const std::vector<const VoxelGrid*>& grids);

class TextEncoder {
 public:
  TextEncoder(diff::ParamStore& store, const EncoderConfig& config, Rng& rng);
  /// [m, embed_dim] embeddings; an empty description encodes the zero state.
  diff::Tensor operator()(const std::vector<std::vector<std::int64_t>>& batch, bool training) const;

 private:
  diff::Tensor mean_pool(const std::vector<std::vector<std::int64_t>>& batch) const;
  diff::Tensor sequence_encode(const std::vector<std::int64_t>& tokens, bool training) const;
  EncoderConfig config_;
  diff::Embedding embedding_;
  diff::Linear fc1_, fc2_;
  // cnn_gru only.
  std::vector<diff::Linear> convs_;
  std::vector<diff::BatchNorm> norms_;
  diff::GruCell gru_;
};

/// Kernel-3 "same" 1-D convolution over the rows of x: [L, C_in] -> [L, C_out].
/// `layer.weight` is [3 * C_in, C_out] with taps ordered previous, current, next.
diff::Tensor conv1d_same(const diff::Tensor& x, const diff::Linear& layer);

class ShapeEncoder {
 public:
  ShapeEncoder(diff::ParamStore& store, const EncoderConfig& config, Rng& rng);
  diff::Tensor operator()(const diff::Tensor& grids, bool training) const;
  diff::Tensor operator()(const std::vector<const VoxelGrid*>& grids, bool training) const {
    return (*this)(grids_to_tensor(grids), training);
  }

 private:
  EncoderConfig config_;
  std::vector<diff::Conv3d> convs_;
  std::vector<diff::BatchNorm> norms_;
  std::int64_t pooled_channels_ = 0;
  std::int64_t pool_ = 1;
  diff::Linear fc_;
};

}  // namespace t2s
