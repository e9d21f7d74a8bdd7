// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <limits>
#include <set>

#include "doctest.h"
#include "t2s/error.hpp"
#include "t2s/primgen.hpp"
#include "t2s/trainer.hpp"

using namespace t2s;

namespace {

namespace fs = std::filesystem;

struct TinyData {
  fs::path dir;
  fs::path manifest;
  Vocabulary vocab;
  EmbeddingDataset data;
};

const TinyData& tiny() {
  static const TinyData d = [] {
    TinyData t;
    t.dir = fs::temp_directory_path() / "t2s_unit_trainer";
    fs::remove_all(t.dir);
    primgen::DatasetOptions o;
    o.out_dir = t.dir;
    o.resolution = 8;
    o.samples_per_config = 3;
    o.seed = 5;
    o.shapes = {0, 3};
    o.colors = {0, 6};
    o.sizes = {4, 8};
    t.manifest = primgen::generate_dataset(o);
    t.vocab = Vocabulary::build(description_corpus(read_manifest(t.manifest), ""), 2);
    t.data = load_embedding_dataset(t.manifest, "", t.vocab);
    return t;
  }();
  return d;
}

TrainConfig tiny_config(std::int64_t steps) {
  TrainConfig c;
  c.steps = steps;
  c.lr = 1e-3;
  c.log_every = 1;
  c.batch = {.shapes_per_batch = 6, .captions_per_shape = 2, .seed = 3};
  c.encoder.word_dim = 8;
  c.encoder.mlp_hidden = 16;
  c.encoder.embed_dim = 8;
  return c;
}

}  // namespace

TEST_CASE("dataset loading keeps every shape with its class") {
  const auto& t = tiny();
  CHECK(t.data.size() == 2 * 2 * 2 * 3);
  CHECK(t.data.num_classes() == 8);
  CHECK(t.data.grids.front().dims() == GridDims{8, 8, 8});
  for (const auto& caps : t.data.tokens) CHECK(caps.size() >= 10);
  CHECK_THROWS_AS(load_embedding_dataset(t.manifest, "nonexistent", t.vocab), InvalidArgument);
}

TEST_CASE("batches draw shapes from distinct classes and are reproducible") {
  const auto& data = tiny().data;
  const BatchSpec spec{.shapes_per_batch = 8, .captions_per_shape = 3, .seed = 1};
  const EmbeddingBatch b = sample_batch(data, spec, 4);
  CHECK(b.shapes.size() == 8);
  CHECK(b.descriptions.size() == 24);
  CHECK(std::set<std::int64_t>(b.shape_class.begin(), b.shape_class.end()).size() == 8);
  for (std::size_t i = 0; i < b.descriptions.size(); ++i) CHECK(b.text_class[i] == b.shape_class[i / 3]);
  CHECK(sample_batch(data, spec, 4).shapes == b.shapes);
  CHECK(sample_batch(data, spec, 5).descriptions != b.descriptions);

  // More shapes than classes: the remainder is filled without repeats.
  const EmbeddingBatch big = sample_batch(data, {.shapes_per_batch = 20, .captions_per_shape = 2, .seed = 1}, 0);
  CHECK(std::set<std::size_t>(big.shapes.begin(), big.shapes.end()).size() == 20);

  CHECK_THROWS_AS(sample_batch(data, {.shapes_per_batch = 4, .captions_per_shape = 1}, 0), InvalidArgument);
  CHECK_THROWS_AS(sample_batch(data, {.shapes_per_batch = 25, .captions_per_shape = 2}, 0), InvalidArgument);
}

TEST_CASE("training reduces the loss and checkpoints reproduce embeddings") {
  const auto& t = tiny();
  const fs::path ck = t.dir / "emb.t2ck";
  const fs::path csv = t.dir / "loss.csv";
  const TrainResult r = train_embedding(t.data, t.vocab, tiny_config(60), {.checkpoint = ck, .loss_csv = csv});
  REQUIRE(r.total_loss.size() == 60);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += r.total_loss[static_cast<std::size_t>(i)];
    tail += r.total_loss[r.total_loss.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(tail < head);
  CHECK(fs::exists(csv));

  const LoadedEmbedding back = load_embedding_checkpoint(ck);
  CHECK(back.vocab.size() == t.vocab.size());
  CHECK(back.config.steps == 60);
  CHECK(back.model->embed_texts(t.data.tokens[0]) == r.model->embed_texts(t.data.tokens[0]));
  CHECK(back.model->embed_shapes(t.data.grids) == r.model->embed_shapes(t.data.grids));
}

TEST_CASE("resumed training matches an uninterrupted run") {
  const auto& t = tiny();
  const fs::path half = t.dir / "half.t2ck";
  train_embedding(t.data, t.vocab, tiny_config(7), {.checkpoint = half});
  const TrainResult resumed = train_embedding(t.data, t.vocab, tiny_config(15), {.resume = half});
  const TrainResult straight = train_embedding(t.data, t.vocab, tiny_config(15), {});
  CHECK(resumed.steps_done == 15);
  CHECK(resumed.total_loss == straight.total_loss);
  CHECK(resumed.model->embed_shapes(t.data.grids) == straight.model->embed_shapes(t.data.grids));
}

TEST_CASE("divergence checkpoints and raises") {
  const auto& t = tiny();
  const fs::path ck = t.dir / "diverged.t2ck";
  auto cfg = tiny_config(5);
  cfg.lr = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train_embedding(t.data, t.vocab, cfg, {.checkpoint = ck}), DivergenceError);
  CHECK(fs::exists(ck));
}

TEST_CASE("training config serialization") {
  auto c = tiny_config(12);
  c.mode = "ml_only";
  c.loss.lambda = 0.5;
  c.encoder.text_kind = "cnn_gru";
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.mode == "ml_only");
  CHECK(back.steps == 12);
  CHECK(back.loss.lambda == 0.5);
  CHECK(back.batch.shapes_per_batch == 6);
  CHECK(back.encoder.text_kind == "cnn_gru");
  CHECK(back.encoder.embed_dim == 8);
}
