// SPDX-License-Identifier: Apache-2.0
#include "t2s/encoders.hpp"

#include <cctype>
#include <fstream>

#include "t2s/error.hpp"

namespace t2s {

using diff::Tensor;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

void Vocabulary::push(std::string token, std::int64_t count) {
  index_[token] = static_cast<std::int64_t>(tokens_.size());
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, std::int64_t min_count) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& text : corpus) {
    for (auto& t : tokenize(text)) ++counts[t];
  }
  Vocabulary v;
  v.min_count_ = min_count;
  v.push("<pad>", 0);
  v.push("<unk>", 0);
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) {
      v.push(tok, n);
    } else {
      v.counts_[kUnk] += n;
    }
  }
  return v;
}

std::int64_t Vocabulary::lookup(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::int64_t> Vocabulary::encode(std::string_view text) const {
  const auto toks = tokenize(text);
  if (toks.size() > kMaxDescriptionTokens) {
    throw InvalidArgument("description has " + std::to_string(toks.size()) + " tokens (limit " +
                          std::to_string(kMaxDescriptionTokens) + ")");
  }
  std::vector<std::int64_t> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(lookup(t));
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    entries.push_back({{"token", tokens_[i]}, {"index", i}, {"count", counts_[i]}});
  }
  return {{"min_count", min_count_}, {"pad", kPad}, {"unk", kUnk}, {"tokens", entries}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  try {
    v.min_count_ = j.at("min_count").get<std::int64_t>();
    for (const auto& e : j.at("tokens")) {
      if (e.at("index").get<std::int64_t>() != v.size()) throw FormatError("vocabulary indices are not dense");
      v.push(e.at("token").get<std::string>(), e.at("count").get<std::int64_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed vocabulary: ") + e.what());
  }
  if (v.size() < 2 || v.tokens_[kPad] != "<pad>" || v.tokens_[kUnk] != "<unk>") {
    throw FormatError("vocabulary must start with <pad> and <unk>");
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << to_json().dump(1) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"text_kind", text_kind},   {"shape_kind", shape_kind}, {"vocab_size", vocab_size},
          {"word_dim", word_dim},     {"mlp_hidden", mlp_hidden}, {"gru_hidden", gru_hidden},
          {"embed_dim", embed_dim},   {"resolution", resolution}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.text_kind = j.value("text_kind", c.text_kind);
  c.shape_kind = j.value("shape_kind", c.shape_kind);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.word_dim = j.value("word_dim", c.word_dim);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.resolution = j.value("resolution", c.resolution);
  return c;
}

Tensor grids_to_tensor(const std::vector<const VoxelGrid*>& grids) {
  if (grids.empty()) throw InvalidArgument("empty grid batch");
  const GridDims d = grids[0]->dims();
  const std::size_t voxels = d.count();
  std::vector<double> v(grids.size() * voxels * VoxelGrid::kChannels);
  for (std::size_t n = 0; n < grids.size(); ++n) {
    if (!(grids[n]->dims() == d)) throw ShapeError("grid batch mixes resolutions");
    const auto src = grids[n]->data();
    double* dst = &v[n * voxels * VoxelGrid::kChannels];
    for (std::size_t i = 0; i < voxels; ++i) {
      for (int c = 0; c < VoxelGrid::kChannels; ++c) dst[c * voxels + i] = src[i * VoxelGrid::kChannels + c];
    }
  }
  return diff::constant({static_cast<std::int64_t>(grids.size()), VoxelGrid::kChannels, d.x, d.y, d.z},
                        std::move(v));
}

Tensor conv1d_same(const Tensor& x, const diff::Linear& layer) {
  const std::int64_t len = x.size(0), ch = x.size(1);
  Tensor prev = x, next = x;
  if (len > 1) {
    prev = diff::concat({Tensor::zeros({1, ch}), diff::slice(x, 0, 0, len - 1)}, 0);
    next = diff::concat({diff::slice(x, 0, 1, len - 1), Tensor::zeros({1, ch})}, 0);
  } else {
    prev = next = Tensor::zeros({1, ch});
  }
  return layer(diff::concat({prev, x, next}, 1));
}

TextEncoder::TextEncoder(diff::ParamStore& store, const EncoderConfig& config, Rng& rng)
    : config_(config), embedding_(store, "text.embedding", config.vocab_size, config.word_dim, rng) {
  if (config.text_kind == "mean_mlp") {
    fc1_ = diff::Linear(store, "text.fc1", config.word_dim, config.mlp_hidden, rng);
    fc2_ = diff::Linear(store, "text.fc2", config.mlp_hidden, config.embed_dim, rng);
  } else if (config.text_kind == "cnn_gru") {
    const std::int64_t widths[] = {config.word_dim, 128, 128, 256, 256};
    for (int i = 0; i < 4; ++i) {
      const std::string name = "text.conv" + std::to_string(i + 1);
      convs_.emplace_back(store, name, 3 * widths[i], widths[i + 1], rng);
      if (i % 2 == 1) norms_.emplace_back(store, name + ".bn", widths[i + 1]);
    }
    gru_ = diff::GruCell(store, "text.gru", 256, config.gru_hidden, rng);
    fc1_ = diff::Linear(store, "text.fc5", config.gru_hidden, 256, rng);
    fc2_ = diff::Linear(store, "text.fc6", 256, config.embed_dim, rng);
  } else {
    throw ConfigError("unknown text encoder kind '" + config.text_kind + "'");
  }
}

Tensor TextEncoder::mean_pool(const std::vector<std::vector<std::int64_t>>& batch) const {
  std::vector<std::int64_t> flat;
  for (const auto& d : batch) flat.insert(flat.end(), d.begin(), d.end());
  const auto m = static_cast<std::int64_t>(batch.size());
  if (flat.empty()) return Tensor::zeros({m, config_.word_dim});
  const auto total = static_cast<std::int64_t>(flat.size());
  std::vector<double> pool(static_cast<std::size_t>(m * total), 0.0);
  std::int64_t col = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    const auto& d = batch[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < d.size(); ++t) pool[i * total + col++] = 1.0 / static_cast<double>(d.size());
  }
  return diff::matmul(diff::constant({m, total}, std::move(pool)), embedding_(flat));
}

Tensor TextEncoder::sequence_encode(const std::vector<std::int64_t>& tokens, bool training) const {
  Tensor h = Tensor::zeros({1, config_.gru_hidden});
  if (tokens.empty()) return h;
  Tensor x = embedding_(tokens);
  std::size_t bn = 0;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = conv1d_same(x, convs_[i]);
    if (i % 2 == 1) x = norms_[bn++](x, training && x.size(0) > 1);
    x = diff::relu(x);
  }
  for (std::int64_t t = 0; t < x.size(0); ++t) h = gru_(h, diff::slice(x, 0, t, 1));
  return h;
}

Tensor TextEncoder::operator()(const std::vector<std::vector<std::int64_t>>& batch, bool training) const {
  if (batch.empty()) throw InvalidArgument("empty text batch");
  for (const auto& d : batch) {
    for (auto t : d) {
      if (t < 0 || t >= config_.vocab_size) {
        throw InvalidArgument("token index " + std::to_string(t) + " outside vocabulary of size " +
                              std::to_string(config_.vocab_size));
      }
    }
  }
  if (config_.text_kind == "mean_mlp") return fc2_(diff::relu(fc1_(mean_pool(batch))));
  std::vector<Tensor> states;
  states.reserve(batch.size());
  for (const auto& d : batch) states.push_back(sequence_encode(d, training));
  return fc2_(diff::relu(fc1_(diff::concat(states, 0))));
}

ShapeEncoder::ShapeEncoder(diff::ParamStore& store, const EncoderConfig& config, Rng& rng) : config_(config) {
  std::vector<std::int64_t> widths;
  if (config.shape_kind == "compact") {
    widths = {VoxelGrid::kChannels, 16, 32};
  } else if (config.shape_kind == "deep") {
    widths = {VoxelGrid::kChannels, 64, 128, 256};
  } else {
    throw ConfigError("unknown shape encoder kind '" + config.shape_kind + "'");
  }
  std::int64_t res = config.resolution;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string name = "shape.conv" + std::to_string(i + 1);
    convs_.emplace_back(store, name, widths[i], widths[i + 1], diff::ConvGeometry{3, 2, 1}, rng);
    if (config.shape_kind == "deep") norms_.emplace_back(store, name + ".bn", widths[i + 1]);
    res = convs_.back().out_size(res);
  }
  if (res < 1) throw ConfigError("resolution too small for the shape encoder");
  pool_ = res;
  pooled_channels_ = widths.back();
  fc_ = diff::Linear(store, "shape.fc", pooled_channels_, config.embed_dim, rng);
}

Tensor ShapeEncoder::operator()(const Tensor& grids, bool training) const {
  if (grids.rank() != 5 || grids.size(1) != VoxelGrid::kChannels || grids.size(2) != config_.resolution ||
      grids.size(3) != config_.resolution || grids.size(4) != config_.resolution) {
    throw ShapeError("shape encoder configured for " + std::to_string(config_.resolution) +
                     "^3 grids, got " + diff::shape_str(grids.shape()));
  }
  Tensor x = grids;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i](x);
    if (!norms_.empty()) x = norms_[i](x, training);
    x = diff::relu(x);
  }
  x = diff::avg_pool3d(x, pool_);
  return fc_(diff::reshape(x, {x.size(0), pooled_channels_}));
}

}  // namespace t2s
