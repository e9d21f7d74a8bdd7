// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <iostream>
#include <regex>
#include <set>

#include "t2s/cwgan.hpp"
#include "t2s/error.hpp"
#include "t2s/evalgen.hpp"
#include "t2s/primgen.hpp"
#include "t2s/retrieval.hpp"
#include "t2s/trainer.hpp"
#include "t2s/voxelize.hpp"

namespace t2s::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) { return json(v).dump(); }

void emit(const json& j, const Settings& s) {
  if (s.has("out")) {
    std::ofstream os(s.str("out"));
    if (!os) throw IoError("cannot write " + s.str("out"));
    os << j.dump(2) << '\n';
  } else {
    std::cout << j.dump(2) << '\n';
  }
}

fs::path beside(const fs::path& file, const std::string& suffix) {
  return file.parent_path() / (file.filename().string() + suffix);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<int> int_list(const Settings& s, const std::string& key) {
  std::vector<int> out;
  for (auto v : s.i64_list(key)) out.push_back(static_cast<int>(v));
  return out;
}

EmbeddingDataset load_split(const Settings& s, const Vocabulary& vocab) {
  return load_embedding_dataset(s.input("data"), s.str("split"), vocab);
}

LoadedEmbedding load_text_model(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError("no such checkpoint: " + path.string());
  return load_embedding_checkpoint(path);
}

std::vector<double> embed_query(const LoadedEmbedding& emb, const std::string& text) {
  return emb.model->embed_texts({emb.vocab.encode(text)});
}

// Every description of every shape, flattened, with instance labels and ids.
struct TextTable {
  std::vector<std::vector<std::int64_t>> tokens;
  std::vector<std::int64_t> labels;
  std::vector<std::string> ids;
  std::vector<std::size_t> owner;
};

TextTable text_table(const EmbeddingDataset& data) {
  TextTable t;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data.tokens[i].size(); ++k) {
      t.tokens.push_back(data.tokens[i][k]);
      t.labels.push_back(data.classes[i]);
      t.ids.push_back(data.records[i].id + "#" + std::to_string(k));
      t.owner.push_back(i);
    }
  }
  return t;
}

// The text checkpoint a GAN was trained against, unless overridden.
fs::path linked_text_checkpoint(const fs::path& gan_ckpt, const Settings& s) {
  if (s.has("text_ckpt")) return s.input("text_ckpt");
  const auto ck = diff::Checkpoint::load(gan_ckpt);
  const std::string linked = ck.meta.value("text_checkpoint", "");
  if (linked.empty()) throw UsageError(gan_ckpt.string() + " records no text checkpoint; pass --text-ckpt");
  if (!fs::exists(linked)) throw MissingFileError("linked text checkpoint missing: " + linked);
  return linked;
}

std::vector<fs::path> write_samples(const std::vector<VoxelGrid>& grids, const fs::path& dir, const std::string& prefix) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "_%03zu.t2sv", i);
    paths.push_back(dir / (prefix + name));
    write_grid(grids[i], paths.back());
  }
  return paths;
}

void add_common(Settings& s) {
  s.add("seed", "0", "Global random seed");
  s.add("threads", "1", "Thread cap (all stages run single-threaded)");
}

// -- subcommands --------------------------------------------------------------

void gen_primitives(const Settings& s) {
  primgen::DatasetOptions o;
  o.out_dir = s.str("out");
  o.resolution = static_cast<int>(s.i64("res"));
  o.samples_per_config = static_cast<int>(s.i64("samples"));
  o.seed = s.u64("seed");
  o.extra_fills_per_template = static_cast<int>(s.i64("extra_fills"));
  o.shapes = int_list(s, "shapes");
  o.colors = int_list(s, "colors");
  o.sizes = int_list(s, "sizes");
  o.train_fraction = s.f64("train_fraction");
  o.val_fraction = s.f64("val_fraction");
  if (o.train_fraction < 0 || o.val_fraction < 0 || o.train_fraction + o.val_fraction > 1.0) {
    throw ConfigError("train_fraction + val_fraction must lie in [0, 1]");
  }
  const auto configs = primgen::selected_configs(o);
  const auto manifest = primgen::generate_dataset(o);
  std::cout << json{{"manifest", manifest.string()},
                    {"configurations", configs.size()},
                    {"grids", configs.size() * static_cast<std::size_t>(o.samples_per_config)}}
                   .dump()
            << '\n';
}

void voxelize_cmd(const Settings& s) {
  voxelize::VoxelizeOptions o;
  o.resolution = static_cast<int>(s.i64("res"));
  o.supersample = static_cast<int>(s.i64("supersample"));
  o.solid = s.flag("solid");
  o.n_views = static_cast<int>(s.i64("views"));
  o.rays_per_side = static_cast<int>(s.i64("rays"));
  o.samples = s.u64("samples");
  o.seed = s.u64("seed");
  o.tau = s.f64("tau");
  const auto mesh = voxelize::load_obj(s.input("mesh"));
  const VoxelGrid g = voxelize::voxelize_mesh(mesh, o);
  ensure_parent(s.str("out"));
  write_grid(g, s.str("out"));
  std::cout << json{{"out", s.str("out")}, {"faces", mesh.face_count()}, {"occupied", g.occupied_count()}}.dump()
            << '\n';
}

void build_vocab(const Settings& s) {
  const auto records = read_manifest(s.input("data"));
  const auto corpus = description_corpus(records, s.str("split"));
  if (corpus.empty()) throw InvalidArgument("split '" + s.str("split") + "' has no descriptions");
  const auto vocab = Vocabulary::build(corpus, s.i64("min_count"));
  ensure_parent(s.str("out"));
  vocab.save(s.str("out"));
  std::cout << json{{"out", s.str("out")}, {"size", vocab.size()}, {"descriptions", corpus.size()}}.dump() << '\n';
}

TrainConfig train_config(const Settings& s) {
  TrainConfig c;
  c.mode = s.str("mode");
  c.steps = s.i64("steps");
  c.lr = s.f64("lr");
  c.log_every = s.i64("log_every");
  c.batch.shapes_per_batch = s.i64("shapes_per_batch");
  c.batch.captions_per_shape = s.i64("captions_per_shape");
  c.batch.seed = s.u64("seed");
  c.loss.lambda = s.f64("lambda");
  c.loss.gamma = s.f64("gamma");
  c.loss.alpha = s.f64("alpha");
  c.loss.norm_threshold = s.f64("norm_threshold");
  c.loss.norm_weight = s.f64("norm_weight");
  c.encoder.text_kind = s.str("text_kind");
  c.encoder.shape_kind = s.str("shape_kind");
  c.encoder.word_dim = s.i64("word_dim");
  c.encoder.mlp_hidden = s.i64("mlp_hidden");
  c.encoder.gru_hidden = s.i64("gru_hidden");
  c.encoder.embed_dim = s.i64("embed_dim");
  LossConfig::for_mode(c.mode, c.loss);
  if (c.steps < 0 || c.lr <= 0) throw ConfigError("steps must be >= 0 and lr > 0");
  return c;
}

void train_embedding_cmd(const Settings& s) {
  const TrainConfig config = train_config(s);
  const fs::path manifest = s.input("data");
  Vocabulary vocab;
  if (s.has("vocab")) {
    if (s.given("min_count")) throw ConfigError("min_count conflicts with a prebuilt vocabulary (--vocab)");
    vocab = Vocabulary::load(s.input("vocab"));
  } else {
    vocab = Vocabulary::build(description_corpus(read_manifest(manifest), s.str("split")), s.i64("min_count"));
  }
  const EmbeddingDataset data = load_split(s, vocab);
  if (static_cast<std::size_t>(config.batch.shapes_per_batch) > data.size()) {
    throw ConfigError("shapes_per_batch = " + std::to_string(config.batch.shapes_per_batch) + " exceeds the " +
                      std::to_string(data.size()) + " shapes of split '" + s.str("split") + "'");
  }
  TrainArtifacts art;
  art.checkpoint = s.str("out");
  ensure_parent(art.checkpoint);
  art.loss_csv = s.has("loss_csv") ? fs::path(s.str("loss_csv")) : beside(art.checkpoint, ".loss.csv");
  if (s.has("resume")) art.resume = s.input("resume");
  const TrainResult r = train_embedding(data, vocab, config, art);
  std::cout << json{{"checkpoint", art.checkpoint.string()},
                    {"steps", r.steps_done},
                    {"final_loss", r.total_loss.empty() ? json(nullptr) : json(r.total_loss.back())}}
                   .dump()
            << '\n';
}

void eval_retrieval(const Settings& s) {
  const auto emb = load_text_model(s.input("ckpt"));
  const EmbeddingDataset data = load_split(s, emb.vocab);
  const std::string dir = s.str("direction");
  const auto ks = s.i64_list("k");
  if (ks.empty()) throw UsageError("--k needs at least one value");
  for (auto k : ks) {
    if (k < 1) throw UsageError("--k values must be positive");
  }
  const auto dim = emb.model->config.embed_dim;
  const TextTable texts = text_table(data);
  const EmbeddingIndex text_index(dim, emb.model->embed_texts(texts.tokens), texts.labels);
  const EmbeddingIndex shape_index(dim, emb.model->embed_shapes(data.grids), data.classes);
  json metrics;
  if (dir == "t2s") {
    metrics = evaluate_retrieval(text_index, shape_index, ks, false);
  } else if (dir == "s2t") {
    metrics = evaluate_retrieval(shape_index, text_index, ks, false);
  } else if (dir == "t2t") {
    metrics = evaluate_retrieval(text_index, text_index, ks, true);
  } else if (dir == "s2s") {
    metrics = evaluate_retrieval(shape_index, shape_index, ks, true);
  } else {
    throw UsageError("--direction must be one of t2s, s2t, t2t, s2s");
  }
  emit({{"direction", dir},
        {"split", s.str("split")},
        {"shapes", data.size()},
        {"texts", texts.tokens.size()},
        {"metrics", metrics}},
       s);
}

void retrieve(const Settings& s) {
  const auto emb = load_text_model(s.input("ckpt"));
  const EmbeddingDataset data = load_split(s, emb.vocab);
  const auto dim = emb.model->config.embed_dim;
  const EmbeddingIndex index(dim, emb.model->embed_shapes(data.grids), data.classes);
  const auto q = embed_query(emb, s.str("query"));
  json hits = json::array();
  std::int64_t rank = 1;
  for (auto id : knn(q, index, s.i64("k"))) {
    const auto& rec = data.records[static_cast<std::size_t>(id)];
    hits.push_back({{"rank", rank++},
                    {"id", rec.id},
                    {"category", rec.category},
                    {"score", dot(q, index.row(id))},
                    {"description", rec.descriptions.empty() ? "" : rec.descriptions.front()}});
  }
  emit({{"query", s.str("query")}, {"results", hits}}, s);
}

GanConfig gan_config(const Settings& s, const GanDataset& data) {
  GanConfig c;
  const auto res = static_cast<std::int64_t>(data.grids.front().dims().x);
  if (s.given("resolution") && s.i64("resolution") != res) {
    throw ConfigError("resolution = " + s.str("resolution") + " but the dataset grids are " + std::to_string(res) +
                      "^3");
  }
  if (s.given("embed_dim") && s.i64("embed_dim") != data.embed_dim) {
    throw ConfigError("embed_dim = " + s.str("embed_dim") + " but the text checkpoint embeds into " +
                      std::to_string(data.embed_dim) + " dimensions");
  }
  c.resolution = res;
  c.embed_dim = data.embed_dim;
  c.channel_divisor = s.i64("channel_divisor");
  c.noise_dim = s.i64("noise_dim");
  c.noise_half_width = s.f64("noise_half_width");
  c.lambda_gp = s.f64("lambda_gp");
  c.warmup_generator_iters = s.i64("warmup_generator_iters");
  c.warmup_critic_steps = s.i64("warmup_critic_steps");
  c.critic_steps = s.i64("critic_steps");
  c.generator_steps = s.i64("generator_steps");
  c.batch_size = s.i64("batch_size");
  c.lr = s.f64("lr");
  c.decay_rate = s.f64("decay_rate");
  c.decay_steps = s.i64("decay_steps");
  c.beta1 = s.f64("beta1");
  c.beta2 = s.f64("beta2");
  c.seed = s.u64("seed");
  c.log_every = s.i64("log_every");
  return c;
}

void train_gan_cmd(const Settings& s) {
  const fs::path text_ckpt = s.input("text_ckpt");
  const auto emb = load_text_model(text_ckpt);
  const EmbeddingDataset data = load_split(s, emb.vocab);
  const GanDataset gd = make_gan_dataset(data, *emb.model);
  const GanConfig config = gan_config(s, gd);
  const fs::path out = s.str("out");
  ensure_parent(out);
  const fs::path csv = s.has("log_csv") ? fs::path(s.str("log_csv")) : beside(out, ".log.csv");
  const GanTrainResult r = train_gan(gd, config, out, csv);
  // Link the text encoder so generation needs only the GAN checkpoint.
  auto ck = diff::Checkpoint::load(out);
  ck.meta["text_checkpoint"] = fs::absolute(text_ckpt).lexically_normal().string();
  ck.save(out);
  std::cout << json{{"checkpoint", out.string()},
                    {"generator_steps", r.log.generator_step.size()},
                    {"final_wasserstein", r.log.wasserstein.empty() ? json(nullptr) : json(r.log.wasserstein.back())}}
                   .dump()
            << '\n';
}

void generate_cmd(const Settings& s) {
  const fs::path gan_path = s.input("ckpt");
  const auto gan = load_gan_checkpoint(gan_path);
  const auto emb = load_text_model(linked_text_checkpoint(gan_path, s));
  const auto grids = generate(*gan, embed_query(emb, s.str("text")), s.i64("n"), s.u64("seed"));
  const auto paths = write_samples(grids, s.str("out"), s.str("prefix"));
  json files = json::array();
  for (const auto& p : paths) files.push_back(p.string());
  std::cout << json{{"text", s.str("text")}, {"files", files}}.dump() << '\n';
}

void train_classifier_cmd(const Settings& s) {
  const auto records = read_manifest(s.input("data"));
  ClassifierConfig c;
  std::set<std::string> present;
  std::vector<const ShapeRecord*> used;
  for (const auto& r : records) {
    if (!s.str("split").empty() && r.split != s.str("split")) continue;
    present.insert(r.category);
    used.push_back(&r);
  }
  if (used.empty()) throw InvalidArgument("split '" + s.str("split") + "' is empty");
  c.classes.assign(present.begin(), present.end());
  if (c.classes.size() < 2) throw InvalidArgument("classifier needs at least two categories");
  c.width = s.i64("width");
  c.steps = s.i64("steps");
  c.batch_size = s.i64("batch_size");
  c.lr = s.f64("lr");
  c.seed = s.u64("seed");
  std::vector<VoxelGrid> grids;
  std::vector<std::int64_t> labels;
  for (const auto* r : used) {
    grids.push_back(read_grid(resolve_voxel_path(s.input("data"), *r)));
    labels.push_back(std::lower_bound(c.classes.begin(), c.classes.end(), r->category) - c.classes.begin());
  }
  c.resolution = grids.front().dims().x;
  const auto cls = train_classifier(grids, labels, c);
  ensure_parent(s.str("out"));
  cls->save(s.str("out"));
  std::cout << json{{"checkpoint", s.str("out")},
                    {"classes", c.classes},
                    {"train_accuracy", class_accuracy(grids, labels, *cls)}}
                   .dump()
            << '\n';
}

void evaluate_cmd(const Settings& s) {
  const fs::path gan_path = s.input("gen_ckpt");
  const auto gan = load_gan_checkpoint(gan_path);
  const auto cls = ShapeClassifier::load(s.input("classifier_ckpt"));
  const auto emb = load_text_model(linked_text_checkpoint(gan_path, s));
  const EmbeddingDataset data = load_split(s, emb.vocab);
  const GanDataset gd = make_gan_dataset(data, *emb.model);
  GenerationEvalOptions o;
  o.occupancy_threshold = s.f64("threshold");
  o.seed = s.u64("seed");
  o.descriptions_per_shape = s.i64("descriptions_per_shape");
  json metrics = evaluate_generation(*gan, gd, *cls, o);
  metrics["split"] = s.str("split");
  emit(metrics, s);
}

void export_embeddings(const Settings& s) {
  const auto emb = load_text_model(s.input("ckpt"));
  const EmbeddingDataset data = load_split(s, emb.vocab);
  const TextTable texts = text_table(data);
  const auto dim = static_cast<std::size_t>(emb.model->config.embed_dim);
  const auto tv = emb.model->embed_texts(texts.tokens);
  const auto sv = emb.model->embed_shapes(data.grids);
  ensure_parent(s.str("out"));
  std::ofstream os(s.str("out"));
  if (!os) throw IoError("cannot write " + s.str("out"));
  os << "id,modality";
  for (std::size_t j = 0; j < dim; ++j) os << ",e" << j;
  os << '\n';
  char buf[32];
  auto row = [&](const std::string& id, const char* modality, const double* v) {
    os << id << ',' << modality;
    for (std::size_t j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v[j]);
      os << buf;
    }
    os << '\n';
  };
  for (std::size_t i = 0; i < data.size(); ++i) row(data.records[i].id, "shape", &sv[i * dim]);
  for (std::size_t i = 0; i < texts.ids.size(); ++i) row(texts.ids[i], "text", &tv[i * dim]);
  std::cout << json{{"out", s.str("out")}, {"shapes", data.size()}, {"texts", texts.ids.size()}, {"dim", dim}}.dump()
            << '\n';
}

void arith(const Settings& s, const std::vector<std::string>& terms) {
  if (terms.empty()) throw UsageError("arith needs at least one term such as \"+t:red box\"");
  const fs::path ckpt = s.input("ckpt");
  const std::string kind = diff::Checkpoint::load(ckpt).meta.value("kind", "");
  std::shared_ptr<GanModel> gan;
  fs::path text_path = ckpt;
  if (kind == "cwgan") {
    gan = load_gan_checkpoint(ckpt);
    text_path = linked_text_checkpoint(ckpt, s);
  } else if (s.has("gan_ckpt")) {
    gan = load_gan_checkpoint(s.input("gan_ckpt"));
  }
  const auto emb = load_text_model(text_path);
  std::optional<EmbeddingDataset> data;
  if (s.has("data")) data = load_split(s, emb.vocab);

  std::vector<ArithmeticTerm> parsed;
  for (const auto& t : terms) {
    const bool explicit_sign = t[0] == '+' || t[0] == '-';
    const double sign = t[0] == '-' ? -1.0 : 1.0;
    const char modality = t[explicit_sign ? 1 : 0];
    const std::string body = t.substr(explicit_sign ? 3 : 2);
    if (modality == 't') {
      parsed.push_back({sign, embed_query(emb, body)});
    } else {
      if (!data) throw UsageError("shape term '" + t + "' needs --data");
      std::size_t at = data->size();
      for (std::size_t i = 0; i < data->size(); ++i) {
        if (data->records[i].id == body) at = i;
      }
      if (at == data->size()) throw InvalidArgument("unknown shape id '" + body + "'");
      parsed.push_back({sign, emb.model->embed_shapes({data->grids[at]})});
    }
  }
  const auto v = embedding_arithmetic(parsed);
  json out{{"terms", terms}};
  if (data) {
    const EmbeddingIndex index(emb.model->config.embed_dim, emb.model->embed_shapes(data->grids), data->classes);
    json hits = json::array();
    for (auto id : knn(v, index, s.i64("k"))) {
      const auto& rec = data->records[static_cast<std::size_t>(id)];
      hits.push_back({{"id", rec.id}, {"category", rec.category}, {"score", dot(v, index.row(id))}});
    }
    out["neighbors"] = hits;
  }
  if (s.flag("generate")) {
    if (!gan) throw UsageError("--generate needs a GAN checkpoint (--ckpt of kind cwgan or --gan-ckpt)");
    if (!s.has("out")) throw UsageError("--generate needs --out DIR");
    const auto paths = write_samples(generate(*gan, v, s.i64("n"), s.u64("seed")), s.str("out"), "arith");
    json files = json::array();
    for (const auto& p : paths) files.push_back(p.string());
    out["files"] = files;
  }
  std::cout << out.dump(2) << '\n';
}

}  // namespace

std::vector<std::string> extract_arith_terms(std::vector<std::string>& args) {
  static const std::regex term(R"(^[+-]?[ts]:.*$)");
  std::vector<std::string> terms;
  const auto sub = std::find(args.begin(), args.end(), "arith");
  if (sub == args.end()) return terms;
  std::vector<std::string> kept(args.begin(), sub + 1);
  for (auto it = sub + 1; it != args.end(); ++it) {
    if (std::regex_match(*it, term)) {
      terms.push_back(*it);
    } else {
      kept.push_back(*it);
    }
  }
  args = std::move(kept);
  return terms;
}

std::vector<std::unique_ptr<Command>> register_commands(CLI::App& app, std::vector<std::string>& arith_terms) {
  std::vector<std::unique_ptr<Command>> cmds;
  auto make = [&](const std::string& name, const std::string& help) -> Command& {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->settings = std::make_unique<Settings>(*c->app);
    c->app->add_option("--config", c->config_file, "Flat 'key = value' config file (flags take precedence)");
    add_common(*c->settings);
    cmds.push_back(std::move(c));
    return *cmds.back();
  };
  auto out_file = [](const Settings& s) { return beside(s.str("out"), ".config.json"); };
  auto out_file_or = [](const std::string& fallback) {
    return [fallback](const Settings& s) { return s.has("out") ? beside(s.str("out"), ".config.json") : fs::path(fallback); };
  };

  {
    auto& c = make("gen-primitives", "Generate the procedural primitives dataset");
    auto& s = *c.settings;
    s.add("out", "", "Output directory");
    s.add("res", "32", "Grid resolution (8, 16, 32 or 64)");
    s.add("samples", "10", "Perturbed samples per configuration");
    s.add("shapes", "", "Comma-separated shape subset (0-5)");
    s.add("colors", "", "Comma-separated color subset (0-13)");
    s.add("sizes", "", "Comma-separated size subset (0-8)");
    s.add("extra_fills", "2", "Random template fills beyond the first per template");
    s.add("train_fraction", "0.8", "Fraction of configurations in the train split");
    s.add("val_fraction", "0.1", "Fraction of configurations in the val split");
    s.require("out");
    c.default_snapshot = [](const Settings& st) { return fs::path(st.str("out")) / "resolved_config.json"; };
    c.run = gen_primitives;
  }
  {
    auto& c = make("voxelize", "Voxelize a colored OBJ mesh");
    auto& s = *c.settings;
    s.add("mesh", "", "Input .obj (with optional .mtl)");
    s.add("res", "32", "Output resolution");
    s.add_switch("solid", false, "Fill the interior");
    s.add("out", "", "Output .t2sv file");
    s.add("supersample", "2", "Rasterize at res * supersample, then downsample");
    s.add("views", "24", "Visibility views");
    s.add("rays", "256", "Rays per side per view");
    s.add("samples", "0", "Surface samples (0 picks by resolution)");
    s.add("tau", "0.25", "Occupancy threshold when downsampling");
    s.require("mesh");
    s.require("out");
    c.default_snapshot = out_file;
    c.run = voxelize_cmd;
  }
  {
    auto& c = make("build-vocab", "Build a vocabulary from manifest descriptions");
    auto& s = *c.settings;
    s.add("data", "", "Manifest (JSONL)");
    s.add("split", "train", "Split to read (empty for all)");
    s.add("min_count", "3", "Tokens seen fewer times map to <unk>");
    s.add("out", "", "Output vocabulary JSON");
    s.require("data");
    s.require("out");
    c.default_snapshot = out_file;
    c.run = build_vocab;
  }
  {
    auto& c = make("train-embedding", "Train the joint text-shape embedding");
    auto& s = *c.settings;
    const TrainConfig d;
    s.add("data", "", "Manifest (JSONL)");
    s.add("out", "", "Output checkpoint");
    s.add("split", "train", "Training split");
    s.add("vocab", "", "Prebuilt vocabulary (default: build from the split)");
    s.add("min_count", "3", "Vocabulary cutoff when building");
    s.add("mode", d.mode, "full, lba_only, ml_only, tst_only or lba_tst");
    s.add("steps", std::to_string(d.steps), "Optimizer steps");
    s.add("lr", num(d.lr), "Adam learning rate");
    s.add("log_every", std::to_string(d.log_every), "Loss logging interval");
    s.add("shapes_per_batch", std::to_string(d.batch.shapes_per_batch), "Shapes per batch");
    s.add("captions_per_shape", std::to_string(d.batch.captions_per_shape), "Descriptions per shape");
    s.add("lambda", num(d.loss.lambda), "Visit-loss weight");
    s.add("gamma", num(d.loss.gamma), "Metric-learning weight");
    s.add("alpha", num(d.loss.alpha), "Metric-learning margin");
    s.add("norm_threshold", num(d.loss.norm_threshold), "Embedding norm threshold");
    s.add("norm_weight", num(d.loss.norm_weight), "Norm penalty weight");
    s.add("text_kind", d.encoder.text_kind, "mean_mlp or cnn_gru");
    s.add("shape_kind", d.encoder.shape_kind, "compact or deep");
    s.add("word_dim", std::to_string(d.encoder.word_dim), "Word embedding width");
    s.add("mlp_hidden", std::to_string(d.encoder.mlp_hidden), "Hidden width of the mean_mlp encoder");
    s.add("gru_hidden", std::to_string(d.encoder.gru_hidden), "GRU state width");
    s.add("embed_dim", std::to_string(d.encoder.embed_dim), "Joint embedding width");
    s.add("loss_csv", "", "Loss log (default: <out>.loss.csv)");
    s.add("resume", "", "Checkpoint to resume from");
    s.require("data");
    s.require("out");
    c.default_snapshot = out_file;
    c.run = train_embedding_cmd;
  }
  {
    auto& c = make("eval-retrieval", "Score retrieval with RR@k and NDCG@k");
    auto& s = *c.settings;
    s.add("ckpt", "", "Embedding checkpoint");
    s.add("data", "", "Manifest (JSONL)");
    s.add("split", "test", "Split to evaluate");
    s.add("direction", "t2s", "t2s, s2t, t2t or s2s");
    s.add("k", "1,5", "Comma-separated cutoffs");
    s.add("out", "", "Metrics JSON (default: stdout)");
    s.require("ckpt");
    s.require("data");
    c.default_snapshot = out_file_or("eval-retrieval.config.json");
    c.run = eval_retrieval;
  }
  {
    auto& c = make("retrieve", "Nearest shapes for a text query");
    auto& s = *c.settings;
    s.add("ckpt", "", "Embedding checkpoint");
    s.add("data", "", "Manifest (JSONL)");
    s.add("split", "", "Split to search (empty for all)");
    s.add("query", "", "Query text");
    s.add("k", "5", "Results");
    s.add("out", "", "Results JSON (default: stdout)");
    s.require("ckpt");
    s.require("data");
    s.require("query");
    c.default_snapshot = out_file_or("retrieve.config.json");
    c.run = retrieve;
  }
  {
    auto& c = make("train-gan", "Train the text-conditional Wasserstein GAN");
    auto& s = *c.settings;
    const GanConfig d;
    s.add("data", "", "Manifest (JSONL)");
    s.add("text_ckpt", "", "Embedding checkpoint providing frozen text embeddings");
    s.add("out", "", "Output checkpoint");
    s.add("split", "train", "Training split");
    s.add("log_csv", "", "Training log (default: <out>.log.csv)");
    s.add("resolution", std::to_string(d.resolution), "Must match the dataset");
    s.add("embed_dim", std::to_string(d.embed_dim), "Must match the text checkpoint");
    s.add("channel_divisor", std::to_string(d.channel_divisor), "Channel width divisor");
    s.add("noise_dim", std::to_string(d.noise_dim), "Noise width");
    s.add("noise_half_width", num(d.noise_half_width), "Noise is uniform in [-w, w]");
    s.add("lambda_gp", num(d.lambda_gp), "Gradient penalty weight");
    s.add("warmup_generator_iters", std::to_string(d.warmup_generator_iters), "Generator steps using warmup critic steps");
    s.add("warmup_critic_steps", std::to_string(d.warmup_critic_steps), "Critic steps per early generator step");
    s.add("critic_steps", std::to_string(d.critic_steps), "Critic steps per generator step");
    s.add("generator_steps", std::to_string(d.generator_steps), "Generator steps");
    s.add("batch_size", std::to_string(d.batch_size), "Batch size");
    s.add("lr", num(d.lr), "Adam learning rate");
    s.add("decay_rate", num(d.decay_rate), "Learning-rate decay factor");
    s.add("decay_steps", std::to_string(d.decay_steps), "Steps per decay stage");
    s.add("beta1", num(d.beta1), "Adam beta1");
    s.add("beta2", num(d.beta2), "Adam beta2");
    s.add("log_every", std::to_string(d.log_every), "Progress interval");
    s.require("data");
    s.require("text_ckpt");
    s.require("out");
    c.default_snapshot = out_file;
    c.run = train_gan_cmd;
  }
  {
    auto& c = make("generate", "Generate colored voxel grids from text");
    auto& s = *c.settings;
    s.add("ckpt", "", "GAN checkpoint");
    s.add("text_ckpt", "", "Override the linked embedding checkpoint");
    s.add("text", "", "Conditioning description");
    s.add("n", "5", "Samples");
    s.add("out", "", "Output directory");
    s.add("prefix", "sample", "File name prefix");
    s.require("ckpt");
    s.require("text");
    s.require("out");
    c.default_snapshot = [](const Settings& st) { return fs::path(st.str("out")) / "resolved_config.json"; };
    c.run = generate_cmd;
  }
  {
    auto& c = make("train-classifier", "Train the primitive-type classifier used by evaluate");
    auto& s = *c.settings;
    const ClassifierConfig d;
    s.add("data", "", "Manifest (JSONL)");
    s.add("split", "train", "Training split");
    s.add("out", "", "Output checkpoint");
    s.add("width", std::to_string(d.width), "First conv width");
    s.add("steps", std::to_string(d.steps), "Optimizer steps");
    s.add("batch_size", std::to_string(d.batch_size), "Batch size");
    s.add("lr", num(d.lr), "Adam learning rate");
    s.require("data");
    s.require("out");
    c.default_snapshot = out_file;
    c.run = train_classifier_cmd;
  }
  {
    auto& c = make("evaluate", "IoU, inception score, color EMD and class accuracy of generations");
    auto& s = *c.settings;
    s.add("gen_ckpt", "", "GAN checkpoint");
    s.add("classifier_ckpt", "", "Classifier checkpoint");
    s.add("text_ckpt", "", "Override the linked embedding checkpoint");
    s.add("data", "", "Manifest (JSONL)");
    s.add("split", "test", "Split to evaluate");
    s.add("threshold", "0.9", "Occupancy threshold");
    s.add("descriptions_per_shape", "1", "Generations per shape");
    s.add("out", "", "Metrics JSON (default: stdout)");
    s.require("gen_ckpt");
    s.require("classifier_ckpt");
    s.require("data");
    c.default_snapshot = out_file_or("evaluate.config.json");
    c.run = evaluate_cmd;
  }
  {
    auto& c = make("export-embeddings", "Write shape and text embeddings as CSV");
    auto& s = *c.settings;
    s.add("ckpt", "", "Embedding checkpoint");
    s.add("data", "", "Manifest (JSONL)");
    s.add("split", "", "Split (empty for all)");
    s.add("out", "", "Output CSV");
    s.require("ckpt");
    s.require("data");
    s.require("out");
    c.default_snapshot = out_file;
    c.run = export_embeddings;
  }
  {
    auto& c = make("arith", "Embedding arithmetic: terms like \"+t:red box\" \"-t:box\" \"+s:<shape id>\"");
    auto& s = *c.settings;
    s.add("ckpt", "", "Embedding or GAN checkpoint");
    s.add("gan_ckpt", "", "GAN checkpoint for --generate when --ckpt is an embedding");
    s.add("text_ckpt", "", "Override the embedding linked from a GAN checkpoint");
    s.add("data", "", "Manifest for neighbors and shape terms");
    s.add("split", "", "Split (empty for all)");
    s.add("k", "5", "Neighbors");
    s.add_switch("generate", false, "Generate grids from the result");
    s.add("n", "1", "Samples with --generate");
    s.add("out", "", "Output directory for --generate");
    s.require("ckpt");
    c.app->add_option("terms", arith_terms, "Signed terms: +t:TEXT, -t:TEXT, +s:ID, -s:ID");
    c.default_snapshot = [](const Settings& st) {
      return st.has("out") ? fs::path(st.str("out")) / "resolved_config.json" : fs::path("arith.config.json");
    };
    c.run = [&arith_terms](const Settings& st) { arith(st, arith_terms); };
  }
  return cmds;
}

}  // namespace t2s::cli
