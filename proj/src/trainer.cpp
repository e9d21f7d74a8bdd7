// SPDX-License-Identifier: Apache-2.0
#include "t2s/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "t2s/diff/optim.hpp"
#include "t2s/error.hpp"
#include "t2s/rng.hpp"

namespace t2s {

using diff::Tensor;

std::size_t EmbeddingDataset::num_classes() const {
  return std::set<std::int64_t>(classes.begin(), classes.end()).size();
}

std::vector<std::string> description_corpus(const std::vector<ShapeRecord>& records, const std::string& split) {
  std::vector<std::string> corpus;
  for (const auto& r : records) {
    if (!split.empty() && r.split != split) continue;
    corpus.insert(corpus.end(), r.descriptions.begin(), r.descriptions.end());
  }
  return corpus;
}

EmbeddingDataset load_embedding_dataset(const std::filesystem::path& manifest, const std::string& split,
                                        const Vocabulary& vocab) {
  EmbeddingDataset data;
  for (auto& rec : read_manifest(manifest)) {
    if (!split.empty() && rec.split != split) continue;
    std::vector<std::vector<std::int64_t>> toks;
    for (const auto& d : rec.descriptions) {
      if (tokenize(d).size() > kMaxDescriptionTokens) continue;
      toks.push_back(vocab.encode(d));
    }
    if (toks.empty()) continue;
    data.grids.push_back(read_grid(resolve_voxel_path(manifest, rec)));
    if (!(data.grids.back().dims() == data.grids.front().dims())) {
      throw FormatError("dataset mixes grid resolutions (" + rec.id + ")");
    }
    data.tokens.push_back(std::move(toks));
    data.classes.push_back(rec.instance_class);
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) {
    throw InvalidArgument("no usable records for split '" + split + "' in " + manifest.string());
  }
  return data;
}

EmbeddingBatch sample_batch(const EmbeddingDataset& data, const BatchSpec& spec, std::int64_t step) {
  if (spec.captions_per_shape < 2) throw InvalidArgument("captions_per_shape must be at least 2");
  if (spec.shapes_per_batch < 1 || static_cast<std::size_t>(spec.shapes_per_batch) > data.size()) {
    throw InvalidArgument("dataset has " + std::to_string(data.size()) + " shapes, batch needs " +
                          std::to_string(spec.shapes_per_batch));
  }
  Rng rng(hash_seed({spec.seed, static_cast<std::uint64_t>(step), 0xba7cULL}));
  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.classes[i]].push_back(i);
  std::vector<std::int64_t> class_order;
  for (const auto& kv : by_class) class_order.push_back(kv.first);
  rng.shuffle(class_order.begin(), class_order.end());

  EmbeddingBatch b;
  std::set<std::size_t> taken;
  const auto n = static_cast<std::size_t>(spec.shapes_per_batch);
  for (std::size_t c = 0; c < class_order.size() && b.shapes.size() < n; ++c) {
    const auto& members = by_class[class_order[c]];
    const std::size_t pick = members[rng.below(members.size())];
    b.shapes.push_back(pick);
    taken.insert(pick);
  }
  if (b.shapes.size() < n) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!taken.count(i)) rest.push_back(i);
    }
    rng.shuffle(rest.begin(), rest.end());
    for (std::size_t i = 0; b.shapes.size() < n; ++i) b.shapes.push_back(rest[i]);
  }
  for (const std::size_t s : b.shapes) {
    b.shape_class.push_back(data.classes[s]);
    const auto& caps = data.tokens[s];
    std::vector<std::size_t> order(caps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    for (std::int64_t k = 0; k < spec.captions_per_shape; ++k) {
      b.descriptions.push_back(caps[order[static_cast<std::size_t>(k) % order.size()]]);
      b.text_class.push_back(data.classes[s]);
    }
  }
  return b;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"mode", mode},
          {"steps", steps},
          {"shapes_per_batch", batch.shapes_per_batch},
          {"captions_per_shape", batch.captions_per_shape},
          {"seed", batch.seed},
          {"lr", lr},
          {"log_every", log_every},
          {"lambda", loss.lambda},
          {"gamma", loss.gamma},
          {"alpha", loss.alpha},
          {"norm_threshold", loss.norm_threshold},
          {"norm_weight", loss.norm_weight},
          {"encoder", encoder.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.mode = j.value("mode", c.mode);
  c.steps = j.value("steps", c.steps);
  c.batch.shapes_per_batch = j.value("shapes_per_batch", c.batch.shapes_per_batch);
  c.batch.captions_per_shape = j.value("captions_per_shape", c.batch.captions_per_shape);
  c.batch.seed = j.value("seed", c.batch.seed);
  c.lr = j.value("lr", c.lr);
  c.log_every = j.value("log_every", c.log_every);
  c.loss.lambda = j.value("lambda", c.loss.lambda);
  c.loss.gamma = j.value("gamma", c.loss.gamma);
  c.loss.alpha = j.value("alpha", c.loss.alpha);
  c.loss.norm_threshold = j.value("norm_threshold", c.loss.norm_threshold);
  c.loss.norm_weight = j.value("norm_weight", c.loss.norm_weight);
  if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"));
  return c;
}

EmbeddingModel::EmbeddingModel(const EncoderConfig& cfg, std::uint64_t seed) : config(cfg) {
  Rng rng(hash_seed({seed, 0xe7c0deULL}));
  text = std::make_unique<TextEncoder>(store, config, rng);
  shape = std::make_unique<ShapeEncoder>(store, config, rng);
}

std::vector<double> EmbeddingModel::embed_texts(const std::vector<std::vector<std::int64_t>>& texts,
                                                std::size_t chunk) const {
  diff::NoGradGuard guard;
  std::vector<double> out;
  out.reserve(texts.size() * static_cast<std::size_t>(config.embed_dim));
  for (std::size_t i = 0; i < texts.size(); i += chunk) {
    const std::vector<std::vector<std::int64_t>> part(texts.begin() + static_cast<std::ptrdiff_t>(i),
                                                      texts.begin() + static_cast<std::ptrdiff_t>(std::min(texts.size(), i + chunk)));
    const Tensor e = (*text)(part, false);
    out.insert(out.end(), e.data().begin(), e.data().end());
  }
  return out;
}

std::vector<double> EmbeddingModel::embed_shapes(const std::vector<VoxelGrid>& grids, std::size_t chunk) const {
  diff::NoGradGuard guard;
  std::vector<double> out;
  out.reserve(grids.size() * static_cast<std::size_t>(config.embed_dim));
  for (std::size_t i = 0; i < grids.size(); i += chunk) {
    std::vector<const VoxelGrid*> part;
    for (std::size_t j = i; j < std::min(grids.size(), i + chunk); ++j) part.push_back(&grids[j]);
    const Tensor e = (*shape)(part, false);
    out.insert(out.end(), e.data().begin(), e.data().end());
  }
  return out;
}

void save_embedding_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model,
                               const diff::Adam* optimizer, const Vocabulary& vocab, const TrainConfig& config,
                               const TrainResult& result) {
  diff::Checkpoint ck;
  ck.put_store("", model.store);
  if (optimizer) ck.put_optimizer("", model.store, *optimizer);
  ck.meta = {{"kind", "embedding"},
             {"config", config.to_json()},
             {"vocab", vocab.to_json()},
             {"steps_done", result.steps_done},
             {"loss_steps", result.logged_steps},
             {"loss_total", result.total_loss}};
  ck.save(path);
}

LoadedEmbedding load_embedding_checkpoint(const std::filesystem::path& path) {
  LoadedEmbedding out;
  out.checkpoint = diff::Checkpoint::load(path);
  const auto& meta = out.checkpoint.meta;
  if (meta.value("kind", "") != "embedding") throw FormatError(path.string() + " is not an embedding checkpoint");
  out.config = TrainConfig::from_json(meta.at("config"));
  out.vocab = Vocabulary::from_json(meta.at("vocab"));
  out.model = std::make_unique<EmbeddingModel>(out.config.encoder, out.config.batch.seed);
  out.checkpoint.load_store("", out.model->store);
  return out;
}

TrainResult train_embedding(const EmbeddingDataset& data, const Vocabulary& vocab, const TrainConfig& config0,
                            const TrainArtifacts& out) {
  TrainConfig config = config0;
  config.encoder.vocab_size = vocab.size();
  config.encoder.resolution = data.grids.front().dims().x;
  const LossConfig loss = LossConfig::for_mode(config.mode, config.loss);

  TrainResult result;
  result.model = std::make_shared<EmbeddingModel>(config.encoder, config.batch.seed);
  EmbeddingModel& model = *result.model;
  diff::Adam adam(model.store, diff::AdamConfig{.lr = config.lr});
  if (out.resume) {
    const auto ck = diff::Checkpoint::load(*out.resume);
    ck.load_store("", model.store);
    if (ck.contains("adam.step")) ck.load_optimizer("", model.store, adam);
    result.steps_done = ck.meta.value("steps_done", std::int64_t{0});
    result.logged_steps = ck.meta.value("loss_steps", std::vector<std::int64_t>{});
    result.total_loss = ck.meta.value("loss_total", std::vector<double>{});
  }

  std::ofstream csv;
  if (!out.loss_csv.empty()) {
    const bool append = out.resume.has_value() && std::filesystem::exists(out.loss_csv);
    csv.open(out.loss_csv, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot write " + out.loss_csv.string());
    if (!append) write_loss_csv_header(csv);
  }

  for (std::int64_t step = result.steps_done; step < config.steps; ++step) {
    const EmbeddingBatch b = sample_batch(data, config.batch, step);
    std::vector<const VoxelGrid*> grids;
    for (auto s : b.shapes) grids.push_back(&data.grids[s]);
    const Tensor t = (*model.text)(b.descriptions, true);
    const Tensor s = (*model.shape)(grids, true);
    const LossBreakdown lb = total_loss(t, b.text_class, s, b.shape_class, loss);
    try {
      if (!std::isfinite(lb.total_value)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step));
      }
      diff::backward(lb.total);
      adam.step();
    } catch (const DivergenceError&) {
      model.store.zero_grad();
      if (!out.checkpoint.empty()) save_embedding_checkpoint(out.checkpoint, model, &adam, vocab, config, result);
      throw;
    }
    result.steps_done = step + 1;
    if (config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.steps)) {
      result.logged_steps.push_back(step);
      result.total_loss.push_back(lb.total_value);
      if (csv.is_open()) write_loss_csv_row(csv, step, lb);
    }
  }
  if (!out.checkpoint.empty()) save_embedding_checkpoint(out.checkpoint, model, &adam, vocab, config, result);
  return result;
}

}  // namespace t2s
