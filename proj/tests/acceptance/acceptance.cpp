// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance checks. Each criterion prints exactly one PASS/FAIL
// line; tolerances and budgets are fixed below.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <set>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "meshes.hpp"
#include "oracles.hpp"
#include "t2s/cwgan.hpp"
#include "t2s/diff/nn.hpp"
#include "t2s/evalgen.hpp"
#include "t2s/jointloss.hpp"
#include "t2s/primgen.hpp"
#include "t2s/retrieval.hpp"
#include "t2s/trainer.hpp"
#include "t2s/voxelize.hpp"

namespace fs = std::filesystem;
namespace d = t2s::diff;
using namespace t2s;
using oracle::Matrix;

namespace {

// -- budgets and tolerances ---------------------------------------------------

constexpr double kDatasetBudgetSec = 300.0;
constexpr int kExpectedConfigs = 756;
constexpr int kExpectedGrids = 7560;
constexpr std::size_t kMinDescriptions = 10;

constexpr double kAblationBudgetSec = 3600.0;
constexpr double kFullRr5Floor = 0.80;
constexpr std::int64_t kAblationSteps = 600;
constexpr std::int64_t kAblationBatch = 50;
constexpr double kAblationLr = 1e-3;

constexpr double kChanceFactor = 3.0;

constexpr int kGradSeeds = 20;
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 300.0;

constexpr int kLossTrials = 100;
constexpr double kLossTol = 1e-10;

constexpr int kEmdTrials = 200;
constexpr double kEmdTol = 1e-9;
constexpr int kRankTrials = 200;
constexpr double kRankTol = 1e-12;

constexpr double kSphereVolumeTol = 0.10;
constexpr double kFixtureBudgetSec = 120.0;
constexpr double kColorTol = 1e-6;

constexpr std::int64_t kGanSteps = 2000;
constexpr double kGanLr = 2e-4;
constexpr std::size_t kGanWindow = 21;
constexpr std::int64_t kGanEarlyStep = 100;
constexpr double kClassAccuracyFloor = 0.70;
constexpr double kDiversityFloor = 0.01;
constexpr double kGanBudgetSec = 5400.0;

struct Env {
  fs::path t2s;
  fs::path work;
};

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

/// Runs the CLI inside `cwd` with stdout captured to `log`; returns the exit status.
int run_cli(const Env& env, const fs::path& cwd, const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = "cd " + quote(cwd.string()) + " && " + quote(fs::absolute(env.t2s).string());
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " > " + quote(fs::absolute(log).string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  if (fs::file_size(a) != fs::file_size(b)) return false;
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::vector<char> ba(1 << 16), bb(1 << 16);
  while (fa && fb) {
    fa.read(ba.data(), static_cast<std::streamsize>(ba.size()));
    fb.read(bb.data(), static_cast<std::streamsize>(bb.size()));
    if (fa.gcount() != fb.gcount() || !std::equal(ba.begin(), ba.begin() + fa.gcount(), bb.begin())) return false;
  }
  return true;
}

std::set<fs::path> tree(const fs::path& root) {
  std::set<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
  }
  return files;
}

/// Empty when both trees hold the same files with identical bytes, otherwise the first difference.
std::string compare_trees(const fs::path& a, const fs::path& b) {
  const auto fa = tree(a), fb = tree(b);
  if (fa != fb) return "file lists differ";
  for (const auto& f : fa) {
    if (!same_bytes(a / f, b / f)) return f.string() + " differs";
  }
  return {};
}

fs::path fresh_dir(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, std::vector<double>(cols));
  for (auto& row : m)
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
  return m;
}

d::Tensor to_tensor(const Matrix& m) {
  std::vector<double> v;
  for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
  return d::constant({static_cast<std::int64_t>(m.size()), static_cast<std::int64_t>(m[0].size())}, v);
}

bool whole_word(const std::string& text, const std::string& phrase) {
  const std::string padded = " " + text + " ";
  return padded.find(" " + phrase + " ") != std::string::npos;
}

// -- 1. dataset regeneration ---------------------------------------------------

Outcome dataset_regeneration(const Env& env) {
  Outcome o;
  const fs::path root = fresh_dir(env.work / "c1");
  double worst_sec = 0.0;
  // Both runs target the same path so the recorded config matches.
  for (const std::string run : {"first", "second"}) {
    const auto t0 = Clock::now();
    const int rc = run_cli(env, root, {"gen-primitives", "--out", "data", "--threads", "1"}, root / (run + ".log"));
    worst_sec = std::max(worst_sec, seconds_since(t0));
    o.require(rc == 0, run + " run exit " + std::to_string(rc));
    if (rc != 0) return o;
    fs::rename(root / "data", root / run);
  }
  const auto records = read_manifest(root / "first" / "manifest.jsonl");
  std::map<int, std::set<std::string>> per_config;
  std::size_t inconsistent = 0, grids = 0;
  for (const auto& r : records) {
    primgen::PrimitiveConfig c;
    c.shape = primgen::shape_from_name(r.category);
    c.color_index = r.extra.at("color_index").get<int>();
    c.size_index = r.extra.at("size_index").get<int>();
    const auto shapes = primgen::slot_lexicon(primgen::Slot::kShape, c);
    const auto colors = primgen::slot_lexicon(primgen::Slot::kColor, c);
    for (const auto& text : r.descriptions) {
      const bool has_shape = std::any_of(shapes.begin(), shapes.end(), [&](auto& w) { return whole_word(text, w); });
      const bool has_color = std::any_of(colors.begin(), colors.end(), [&](auto& w) { return whole_word(text, w); });
      inconsistent += !(has_shape && has_color);
      per_config[c.index()].insert(text);
    }
    grids += fs::exists(resolve_voxel_path(root / "first" / "manifest.jsonl", r));
  }
  std::size_t fewest = per_config.empty() ? 0 : per_config.begin()->second.size();
  for (const auto& [k, texts] : per_config) fewest = std::min(fewest, texts.size());
  o.require(static_cast<int>(per_config.size()) == kExpectedConfigs,
            std::to_string(per_config.size()) + " configurations");
  o.require(static_cast<int>(records.size()) == kExpectedGrids && static_cast<int>(grids) == kExpectedGrids,
            std::to_string(grids) + " grids");
  o.require(fewest >= kMinDescriptions, "min " + std::to_string(fewest) + " distinct descriptions/config");
  o.require(inconsistent == 0, std::to_string(inconsistent) + " inconsistent descriptions");
  const std::string diff = compare_trees(root / "first", root / "second");
  o.require(diff.empty(), diff.empty() ? "two runs byte-identical" : diff);
  o.require(worst_sec < kDatasetBudgetSec, "slowest run " + fmt(worst_sec, 3) + " s");
  fs::remove_all(root);
  return o;
}

// -- 2/3. retrieval -------------------------------------------------------------

struct ReducedSet {
  Vocabulary vocab;
  EmbeddingDataset train, test;
};

/// 6 shapes x 4 colors x 9 sizes = 216 configurations, 5 samples each, at 16^3.
const ReducedSet& reduced_set(const Env& env) {
  static const ReducedSet set = [&] {
    const fs::path dir = env.work / "reduced16";
    const fs::path manifest = dir / "manifest.jsonl";
    if (!fs::exists(manifest)) {
      primgen::DatasetOptions opt;
      opt.out_dir = dir;
      opt.resolution = 16;
      opt.samples_per_config = 5;
      opt.colors = {0, 2, 4, 6};
      primgen::generate_dataset(opt);
    }
    ReducedSet s;
    s.vocab = Vocabulary::build(description_corpus(read_manifest(manifest), "train"));
    s.train = load_embedding_dataset(manifest, "train", s.vocab);
    s.test = load_embedding_dataset(manifest, "test", s.vocab);
    return s;
  }();
  return set;
}

nlohmann::json text_to_shape(const EmbeddingModel& model, const EmbeddingDataset& data, std::vector<std::int64_t> ks) {
  std::vector<std::vector<std::int64_t>> texts;
  Labels labels;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (const auto& t : data.tokens[i]) {
      texts.push_back(t);
      labels.push_back(data.classes[i]);
    }
  }
  const auto dim = model.config.embed_dim;
  const EmbeddingIndex queries(dim, model.embed_texts(texts), labels);
  const EmbeddingIndex shapes(dim, model.embed_shapes(data.grids), data.classes);
  return evaluate_retrieval(queries, shapes, ks, false);
}

Outcome retrieval_ablation(const Env& env) {
  Outcome o;
  const auto t0 = Clock::now();
  const ReducedSet& set = reduced_set(env);
  std::map<std::string, double> rr5;
  for (const std::string mode : {"full", "ml_only", "lba_tst"}) {
    TrainConfig c;
    c.mode = mode;
    c.steps = kAblationSteps;
    c.batch.shapes_per_batch = kAblationBatch;
    c.lr = kAblationLr;
    const TrainResult r = train_embedding(set.train, set.vocab, c, {});
    rr5[mode] = text_to_shape(*r.model, set.test, {5})["rr@5"].get<double>();
  }
  const double sec = seconds_since(t0);
  o.require(rr5["full"] > rr5["ml_only"], "Full RR@5 " + fmt(rr5["full"]) + " > ML " + fmt(rr5["ml_only"]));
  o.require(rr5["full"] > rr5["lba_tst"], "Full > LBA-TST " + fmt(rr5["lba_tst"]));
  o.require(rr5["full"] >= kFullRr5Floor, "Full >= " + fmt(kFullRr5Floor));
  o.require(sec < kAblationBudgetSec, fmt(sec, 3) + " s");
  return o;
}

Outcome random_baseline(const Env& env) {
  Outcome o;
  const ReducedSet& set = reduced_set(env);
  const double chance = 1.0 / static_cast<double>(set.test.num_classes());
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    EncoderConfig ec;
    ec.vocab_size = set.vocab.size();
    ec.resolution = set.test.grids.front().dims().x;
    const EmbeddingModel model(ec, seed);
    const double rr1 = text_to_shape(model, set.test, {1})["rr@1"].get<double>();
    o.require(rr1 >= chance / kChanceFactor && rr1 <= chance * kChanceFactor,
              "seed " + std::to_string(seed) + " RR@1 " + fmt(rr1));
  }
  o.detail += "; chance " + fmt(chance) + " (x" + fmt(kChanceFactor) + " window)";
  return o;
}

// -- 4. gradients -----------------------------------------------------------------

d::Tensor probe(const d::Tensor& y) {
  std::vector<double> w(static_cast<std::size_t>(y.numel()));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  return d::sum(d::mul(y, d::constant(y.shape(), w)));
}

using Fn = std::function<d::Tensor(const std::vector<d::Tensor>&)>;

struct GradCase {
  std::string name;
  std::function<std::pair<Fn, std::vector<d::Tensor>>(std::uint64_t seed)> make;
};

std::vector<GradCase> grad_cases() {
  using test::random_tensor;
  std::vector<GradCase> cases;
  auto unary = [&](std::string name, std::function<d::Tensor(const d::Tensor&)> op, d::Shape shape, double lo,
                   double hi) {
    cases.push_back({std::move(name), [=](std::uint64_t s) {
                       return std::make_pair(Fn([op](auto& in) { return probe(op(in[0])); }),
                                             std::vector<d::Tensor>{random_tensor(shape, s, lo, hi)});
                     }});
  };
  auto binary = [&](std::string name, std::function<d::Tensor(const d::Tensor&, const d::Tensor&)> op, d::Shape a,
                    d::Shape b, double lo, double hi) {
    cases.push_back({std::move(name), [=](std::uint64_t s) {
                       return std::make_pair(Fn([op](auto& in) { return probe(op(in[0], in[1])); }),
                                             std::vector<d::Tensor>{random_tensor(a, s), random_tensor(b, s + 7919, lo, hi)});
                     }});
  };
  binary("add", d::add, {3, 4}, {1, 4}, -1, 1);
  binary("sub", d::sub, {3, 4}, {3, 1}, -1, 1);
  binary("mul", d::mul, {3, 4}, {1, 4}, -1, 1);
  binary("div", d::div, {3, 4}, {3, 1}, 0.5, 2);
  binary("safe_div", d::safe_div, {3, 4}, {1, 4}, 0.5, 2);
  binary("matmul", d::matmul, {3, 4}, {4, 2}, -1, 1);
  binary("matmul_nt", d::matmul_nt, {3, 4}, {2, 4}, -1, 1);
  binary("matmul_tn", d::matmul_tn, {4, 3}, {4, 2}, -1, 1);
  binary("concat", [](auto& a, auto& b) { return d::concat({a, b, a}, 1); }, {2, 3}, {2, 2}, -1, 1);
  unary("scale", [](auto& x) { return d::scale(x, -1.7); }, {2, 5}, -1, 1);
  unary("add_scalar", [](auto& x) { return d::add_scalar(x, 0.4); }, {2, 5}, -1, 1);
  unary("neg", d::neg, {2, 5}, -1, 1);
  unary("relu", d::relu, {2, 5}, -1, 1);
  unary("leaky_relu", [](auto& x) { return d::leaky_relu(x, 0.2); }, {2, 5}, -1, 1);
  unary("sigmoid", d::sigmoid, {2, 5}, -3, 3);
  unary("tanh", d::tanh, {2, 5}, -2, 2);
  unary("exp", d::exp, {2, 5}, -1, 1);
  unary("log", d::log, {2, 5}, 0.2, 2);
  unary("sqrt", d::sqrt, {2, 5}, 0.2, 2);
  unary("square", d::square, {2, 5}, -1, 1);
  unary("sum", [](auto& x) { return d::scale(d::sum(x), 1.0); }, {3, 4}, -1, 1);
  unary("sum_axis", [](auto& x) { return d::sum(x, 1, false); }, {3, 4, 2}, -1, 1);
  unary("mean", [](auto& x) { return d::mean(d::square(x)); }, {3, 4}, -1, 1);
  unary("mean_axis", [](auto& x) { return d::mean(x, 2, true); }, {3, 4, 2}, -1, 1);
  unary("broadcast_to", [](auto& x) { return d::broadcast_to(x, {2, 3, 1, 2}); }, {3, 1, 2}, -1, 1);
  unary("sum_to", [](auto& x) { return d::sum_to(x, {4, 1}); }, {3, 4, 2}, -1, 1);
  unary("reshape", [](auto& x) { return d::reshape(x, {4, 6}); }, {3, 4, 2}, -1, 1);
  unary("transpose", d::transpose, {3, 4}, -1, 1);
  unary("slice", [](auto& x) { return d::slice(x, 1, 1, 2); }, {3, 4, 2}, -1, 1);
  unary("index_rows", [](auto& x) { return d::index_rows(x, {2, 0, 2, 1}); }, {3, 4}, -1, 1);
  unary("scatter_add_rows", [](auto& x) { return d::scatter_add_rows(x, {2, 0, 2, 1}, 3); }, {4, 3}, -1, 1);
  unary("softmax_rows", d::softmax_rows, {3, 4}, -2, 2);
  unary("log_softmax_rows", d::log_softmax_rows, {3, 4}, -2, 2);
  unary("l2_norm_rows", d::l2_norm_rows, {3, 4}, -1, 1);
  unary("avg_pool3d", [](auto& x) { return d::avg_pool3d(x, 2); }, {1, 2, 4, 4, 4}, -1, 1);
  unary("avg_unpool3d", [](auto& x) { return d::avg_unpool3d(x, 2); }, {1, 2, 2, 2, 2}, -1, 1);
  for (const d::ConvGeometry g : {d::ConvGeometry{3, 1, 1}, d::ConvGeometry{4, 2, 1}, d::ConvGeometry{2, 2, 0}}) {
    const std::string tag = "[k" + std::to_string(g.kernel) + "s" + std::to_string(g.stride) + "]";
    const std::int64_t o = d::conv_out_size(4, g);
    binary("conv3d" + tag, [g](auto& x, auto& w) { return d::conv3d(x, w, g); }, {1, 2, 4, 4, 4},
           {2, 2, g.kernel, g.kernel, g.kernel}, -1, 1);
    binary("conv3d_transpose" + tag, [g](auto& y, auto& w) { return d::conv3d_transpose(y, w, g, {4, 4, 4}); },
           {1, 2, o, o, o}, {2, 2, g.kernel, g.kernel, g.kernel}, -1, 1);
    binary("conv3d_weight_grad" + tag, [g](auto& x, auto& gy) { return d::conv3d_weight_grad(x, gy, g); },
           {1, 2, 4, 4, 4}, {1, 2, o, o, o}, -1, 1);
  }
  cases.push_back({"batch_norm", [](std::uint64_t s) {
                     return std::make_pair(
                         Fn([](auto& in) {
                           const d::Tensor mu = d::mean(in[0], 0, true);
                           const d::Tensor var = d::mean(d::square(d::sub(in[0], mu)), 0, true);
                           return probe(d::batch_norm(in[0], mu, var, in[1], in[2], 1e-5));
                         }),
                         std::vector<d::Tensor>{random_tensor({4, 3}, s), random_tensor({3}, s + 1, 0.5, 1.5),
                                                random_tensor({3}, s + 2)});
                   }});
  cases.push_back({"joint loss graph", [](std::uint64_t s) {
                     Rng rng(s);
                     Labels shape_class{0, 1, 2, 0}, text_class;
                     for (int i = 0; i < 6; ++i) text_class.push_back(shape_class[rng.below(4)]);
                     text_class[0] = text_class[1];
                     auto text = test::random_tensor({6, 3}, s + 11);
                     auto shape = test::random_tensor({4, 3}, s + 12);
                     text.mutable_data()[0] = 7.0;  // one row past the norm threshold
                     text.mutable_data()[1] = 9.0;
                     LossConfig c;
                     c.norm_threshold = 10.0;
                     return std::make_pair(Fn([=](auto& in) {
                                             return total_loss(in[0], text_class, in[1], shape_class, c).total;
                                           }),
                                           std::vector<d::Tensor>{text, shape});
                   }});
  cases.push_back({"critic input gradients", [](std::uint64_t s) {
                     GanConfig c;
                     c.embed_dim = 4;
                     c.channel_divisor = 32;
                     auto store = std::make_shared<d::ParamStore>();
                     Rng rng(s);
                     auto critic = std::make_shared<Critic>(*store, c, rng);
                     return std::make_pair(Fn([critic, store](auto& in) { return d::sum((*critic)(in[0], in[1])); }),
                                           std::vector<d::Tensor>{test::random_tensor({2, 4}, s + 21),
                                                                  test::random_tensor({2, 4, 8, 8, 8}, s + 22, 0, 1)});
                   }});
  cases.push_back({"gradient penalty (second order)", [](std::uint64_t s) {
                     GanConfig c;
                     c.embed_dim = 4;
                     c.channel_divisor = 32;
                     auto store = std::make_shared<d::ParamStore>();
                     Rng rng(s);
                     auto critic = std::make_shared<Critic>(*store, c, rng);
                     const CriticFn fn = [critic, store](const d::Tensor& t, const d::Tensor& v) { return (*critic)(t, v); };
                     return std::make_pair(Fn([fn](auto& in) { return gradient_penalty(fn, in[0], in[1]); }),
                                           std::vector<d::Tensor>{test::random_tensor({2, 4}, s + 31),
                                                                  test::random_tensor({2, 4, 8, 8, 8}, s + 32, 0, 1)});
                   }});
  return cases;
}

Outcome gradient_correctness(const Env&) {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::vector<std::string> failed;
  const auto cases = grad_cases();
  for (const auto& gc : cases) {
    double case_worst = 0.0;
    for (int s = 0; s < kGradSeeds; ++s) {
      auto [fn, inputs] = gc.make(static_cast<std::uint64_t>(1000 + s));
      case_worst = std::max(case_worst, test::gradcheck_relative(fn, inputs));
    }
    if (case_worst > kGradTol) failed.push_back(gc.name + "=" + fmt(case_worst, 2));
    if (case_worst >= worst) {
      worst = case_worst;
      worst_name = gc.name;
    }
  }
  const double sec = seconds_since(t0);
  std::string list;
  for (const auto& f : failed) list += " " + f;
  o.require(failed.empty(), std::to_string(cases.size()) + " graphs x " + std::to_string(kGradSeeds) +
                                " seeds, worst rel err " + fmt(worst, 2) + " (" + worst_name + ")" + list);
  o.require(sec < kGradBudgetSec, fmt(sec, 3) + " s");
  return o;
}

// -- 5. loss oracles --------------------------------------------------------------

struct LossBatch {
  Matrix text, shape;
  Labels text_class, shape_class;
};

bool pairs_within(const Labels& c) {
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j)
      if (c[i] == c[j]) return true;
  return false;
}

/// Random batch with at most 4 texts and 4 shapes; every text's class has a shape.
LossBatch loss_batch(Rng& rng) {
  for (;;) {
    LossBatch b;
    const std::size_t n = 1 + rng.below(4), m = 2 + rng.below(3), dim = 2 + rng.below(3);
    for (std::size_t j = 0; j < n; ++j) b.shape_class.push_back(static_cast<std::int64_t>(rng.below(3)));
    for (std::size_t i = 0; i < m; ++i) b.text_class.push_back(b.shape_class[rng.below(n)]);
    b.text = random_matrix(rng, m, dim);
    b.shape = random_matrix(rng, n, dim);
    if (pairs_within(b.text_class)) return b;
  }
}

Outcome loss_oracles(const Env&) {
  Outcome o;
  Rng rng(2024);
  double e_tst = 0, e_sts = 0, e_ml = 0, e_total = 0;
  for (int trial = 0; trial < kLossTrials; ++trial) {
    const LossBatch b = loss_batch(rng);
    const double lambda = rng.uniform(0.0, 1.0), alpha = rng.uniform(0.1, 1.0), gamma = rng.uniform(0.1, 2.0);
    const auto p = association_probs(to_tensor(b.text), to_tensor(b.shape));
    const auto ref = oracle::associate(b.text, b.shape);
    const double tst = oracle::association_loss(ref.tst, ref.shape_visit, b.text_class, lambda);
    const double sts = oracle::association_loss(ref.sts, ref.text_visit, b.shape_class, lambda);
    e_tst = std::max(e_tst, std::abs(lba_tst_loss(p, b.text_class, lambda).item() - tst));
    e_sts = std::max(e_sts, std::abs(lba_sts_loss(p, b.shape_class, lambda).item() - sts));
    const double within = oracle::ml_within(b.text, b.text_class, alpha);
    const double cross = oracle::ml_cross(b.text, b.text_class, b.shape, b.shape_class, alpha);
    e_ml = std::max(e_ml, std::abs(ml_loss_within(to_tensor(b.text), b.text_class, alpha).item() - within));
    e_ml = std::max(e_ml, std::abs(ml_loss_cross(to_tensor(b.text), b.text_class, to_tensor(b.shape), b.shape_class,
                                                 alpha).item() - cross));
    LossConfig c;
    c.lambda = lambda;
    c.alpha = alpha;
    c.gamma = gamma;
    c.norm_threshold = 1.0;  // random rows often exceed it, so the penalty is exercised
    const double expected = tst + sts + gamma * (within + cross) + oracle::norm_penalty(b.text, 1.0) +
                            oracle::norm_penalty(b.shape, 1.0);
    const auto got = total_loss(to_tensor(b.text), b.text_class, to_tensor(b.shape), b.shape_class, c);
    e_total = std::max(e_total, std::abs(got.total_value - expected));
  }
  o.require(e_tst <= kLossTol, "lba_tst max err " + fmt(e_tst, 2));
  o.require(e_sts <= kLossTol, "lba_sts " + fmt(e_sts, 2));
  o.require(e_ml <= kLossTol, "ml " + fmt(e_ml, 2));
  o.require(e_total <= kLossTol, "total " + fmt(e_total, 2));
  o.detail += " over " + std::to_string(kLossTrials) + " trials";
  return o;
}

// -- 6. metric oracles ------------------------------------------------------------

ColorHistogram random_histogram(Rng& rng, int hue_bins, int sat_bins, double sparsity) {
  ColorHistogram h;
  h.hue_bins = hue_bins;
  h.sat_bins = sat_bins;
  h.bins.assign(static_cast<std::size_t>(hue_bins * sat_bins), 0.0);
  double total = 0.0;
  for (auto& v : h.bins) total += (v = rng.uniform() < sparsity ? 0.0 : rng.uniform());
  if (total == 0.0) {
    h.bins[rng.below(h.bins.size())] = 1.0;
    total = 1.0;
  }
  for (auto& v : h.bins) v /= total;
  return h;
}

/// Circular L1 on hue plus L1 on saturation, from bin indices.
Matrix ground_costs(int hue_bins, int sat_bins) {
  const int n = hue_bins * sat_bins;
  Matrix c(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const int dh = std::abs(a / sat_bins - b / sat_bins);
      c[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
          std::min(dh, hue_bins - dh) + std::abs(a % sat_bins - b % sat_bins);
    }
  return c;
}

Outcome metric_oracles(const Env&) {
  Outcome o;
  Rng rng(77);
  const std::pair<int, int> geometries[] = {{6, 1}, {3, 2}, {2, 3}, {5, 1}, {4, 1}, {2, 2}, {1, 6}};
  double emd_err = 0.0;
  for (int t = 0; t < kEmdTrials; ++t) {
    const auto [hb, sb] = geometries[static_cast<std::size_t>(t) % std::size(geometries)];
    const auto a = random_histogram(rng, hb, sb, 0.3), b = random_histogram(rng, hb, sb, 0.3);
    emd_err = std::max(emd_err, std::abs(color_emd(a, b) - oracle::transport_cost(a.bins, b.bins, ground_costs(hb, sb))));
  }
  o.require(emd_err <= kEmdTol, "EMD vs LP max err " + fmt(emd_err, 2) + " (" + std::to_string(kEmdTrials) + " trials)");

  double rank_err = 0.0;
  for (int t = 0; t < kRankTrials; ++t) {
    const std::size_t dim = 2 + rng.below(3), n_index = 1 + rng.below(12), n_query = 1 + rng.below(6);
    const bool ties = t % 2 == 0;
    auto draw = [&] { return ties ? std::round(rng.uniform(-2.0, 2.0)) / 2.0 : rng.uniform(-1.0, 1.0); };
    std::vector<double> iv(n_index * dim), qv(n_query * dim);
    for (auto& v : iv) v = draw();
    for (auto& v : qv) v = draw();
    std::vector<std::int64_t> il(n_index), ql(n_query);
    for (auto& l : il) l = static_cast<std::int64_t>(rng.below(4));
    for (auto& l : ql) l = static_cast<std::int64_t>(rng.below(5));
    std::vector<std::int64_t> ks;
    for (std::int64_t k : {1, 2, 5, 10})
      if (k <= static_cast<std::int64_t>(n_index)) ks.push_back(k);
    const auto got = evaluate_retrieval(EmbeddingIndex(static_cast<std::int64_t>(dim), qv, ql),
                                        EmbeddingIndex(static_cast<std::int64_t>(dim), iv, il), ks, false);
    for (auto k : ks) {
      double hits = 0.0, ndcg_sum = 0.0, scored = 0.0;
      for (std::size_t q = 0; q < n_query; ++q) {
        std::vector<double> sims(n_index, 0.0);
        for (std::size_t i = 0; i < n_index; ++i)
          for (std::size_t j = 0; j < dim; ++j) sims[i] += qv[q * dim + j] * iv[i * dim + j];
        const auto ranking = oracle::brute_ranking(sims, -1);
        bool hit = false;
        for (std::int64_t r = 0; r < k && r < static_cast<std::int64_t>(ranking.size()); ++r) {
          hit = hit || il[static_cast<std::size_t>(ranking[static_cast<std::size_t>(r)])] == ql[q];
        }
        hits += hit;
        const double nd = oracle::ndcg_one(ranking, il, ql[q], k);
        if (nd >= 0.0) {
          ndcg_sum += nd;
          scored += 1.0;
        }
      }
      const std::string kk = std::to_string(k);
      rank_err = std::max(rank_err, std::abs(got["rr@" + kk].get<double>() - hits / static_cast<double>(n_query)));
      if (scored > 0) rank_err = std::max(rank_err, std::abs(got["ndcg@" + kk].get<double>() - ndcg_sum / scored));
    }
  }
  o.require(rank_err <= kRankTol, "RR/NDCG vs brute force max err " + fmt(rank_err, 2));

  int violations = 0;
  for (int t = 0; t < kEmdTrials; ++t) {
    const auto a = random_histogram(rng, 8, 8, 0.8), b = random_histogram(rng, 8, 8, 0.8),
               c = random_histogram(rng, 8, 8, 0.8);
    const double ab = color_emd(a, b), ba = color_emd(b, a), bc = color_emd(b, c), ac = color_emd(a, c);
    violations += color_emd(a, a) != 0.0;
    violations += std::abs(ab - ba) > kEmdTol;
    violations += ac > ab + bc + kEmdTol;
    violations += a.bins != b.bins && !(ab > 0.0);
  }
  o.require(violations == 0, "metric axioms on " + std::to_string(kEmdTrials) + " triples, " +
                                 std::to_string(violations) + " violations");
  return o;
}

// -- 7. voxelizer -----------------------------------------------------------------

Outcome voxelizer_fidelity(const Env&) {
  Outcome o;
  {
    const auto t0 = Clock::now();
    voxelize::VoxelizeOptions opt;
    opt.resolution = 64;
    opt.supersample = 1;  // rasterize at the target resolution so the frame maps r exactly
    opt.solid = true;
    const VoxelGrid g = voxelize::voxelize_mesh(test::uv_sphere(1.0, 64, 32), opt);
    // The frame maps the diameter onto res - 3 voxels (one-voxel margins, centers).
    const double r = (64 - 3) / 2.0;
    const double expected = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    const double rel = std::abs(static_cast<double>(g.occupied_count()) - expected) / expected;
    const double sec = seconds_since(t0);
    o.require(rel <= kSphereVolumeTol && sec < kFixtureBudgetSec,
              "sphere 64^3 volume rel err " + fmt(rel, 3) + " in " + fmt(sec, 3) + " s");

    const auto t1 = Clock::now();
    const VoxelGrid once = voxelize::solid_fill(g);
    const bool idempotent = voxelize::solid_fill(once).data().size() == once.data().size() &&
                            std::equal(once.data().begin(), once.data().end(), voxelize::solid_fill(once).data().begin());
    o.require(idempotent && seconds_since(t1) < kFixtureBudgetSec, "solid_fill idempotent");
  }
  {
    const auto t0 = Clock::now();
    voxelize::VoxelizeOptions opt;
    opt.resolution = 32;
    opt.supersample = 1;
    opt.samples = 400000;  // dense enough that every boundary voxel receives a sample
    opt.solid = true;
    const Rgb color{0.8, 0.3, 0.1};
    const VoxelGrid g = voxelize::voxelize_mesh(test::box({-1, -1, -1}, {1, 1, 1}, color), opt);
    std::size_t inside = 0, wrong = 0;
    for (std::uint32_t x = 0; x < 32; ++x)
      for (std::uint32_t y = 0; y < 32; ++y)
        for (std::uint32_t z = 0; z < 32; ++z) {
          const bool expect = x >= 1 && x < 31 && y >= 1 && y < 31 && z >= 1 && z < 31;
          const bool occ = g.occupancy(x, y, z) > 0.5;
          inside += occ;
          wrong += occ != expect;
        }
    const double sec = seconds_since(t0);
    o.require(wrong == 0 && inside == 30 * 30 * 30 && sec < kFixtureBudgetSec,
              "cube 32^3 exact (" + std::to_string(inside) + " voxels, " + std::to_string(wrong) + " wrong)");
  }
  {
    const Rgb color{0.2, 0.55, 0.7};
    const VoxelGrid solid = VoxelGrid::cube(16, 1.0, color);
    const VoxelGrid small = voxelize::downsample(solid, 2);
    double err = 0.0;
    for (std::size_t v = 0; v < small.voxel_count(); ++v) {
      const Rgb c = small.color(v);
      err = std::max({err, std::abs(c.r - color.r), std::abs(c.g - color.g), std::abs(c.b - color.b)});
    }
    o.require(err <= kColorTol && small.occupied_count() == 8 * 8 * 8, "downsample color err " + fmt(err, 2));
  }
  return o;
}

// -- 8. CWGAN ---------------------------------------------------------------------

double moving_average(const std::vector<double>& w, std::size_t end_inclusive) {
  const std::size_t first = end_inclusive + 1 >= kGanWindow ? end_inclusive + 1 - kGanWindow : 0;
  double s = 0.0;
  for (std::size_t i = first; i <= end_inclusive; ++i) s += w[i];
  return s / static_cast<double>(end_inclusive + 1 - first);
}

double mean_pairwise_l2(const std::vector<VoxelGrid>& g) {
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < g[i].data().size(); ++k) {
        const double dv = g[i].data()[k] - g[j].data()[k];
        s += dv * dv;
      }
      total += std::sqrt(s);
      ++pairs;
    }
  return total / pairs;
}

bool exact_critic_identities() {
  const std::int64_t n = 3;
  CriticBatch b;
  b.fake_text = test::random_tensor({n, 4}, 1);
  b.mismatch_text = test::random_tensor({n, 4}, 2);
  b.match_text = test::random_tensor({n, 4}, 3);
  b.gp_text = test::random_tensor({n, 4}, 4);
  b.fake_shape = test::random_tensor({n, 4, 8, 8, 8}, 5, 0, 1);
  b.mismatch_shape = test::random_tensor({n, 4, 8, 8, 8}, 6, 0, 1);
  b.match_shape = test::random_tensor({n, 4, 8, 8, 8}, 7, 0, 1);
  b.gp_shape = test::random_tensor({n, 4, 8, 8, 8}, 8, 0, 1);
  const CriticFn constant = [](const d::Tensor& t, const d::Tensor&) {
    return d::add_scalar(d::scale(d::slice(t, 1, 0, 1), 0.0), 2.5);
  };
  const CriticFn zero = [](const d::Tensor& t, const d::Tensor&) { return d::scale(d::slice(t, 1, 0, 1), 0.0); };
  const CriticFn first = [](const d::Tensor&, const d::Tensor& s) {
    return d::slice(d::reshape(s, {s.size(0), s.numel() / s.size(0)}), 1, 0, 1);
  };
  const CriticFn twice = [&](const d::Tensor& t, const d::Tensor& s) { return d::scale(first(t, s), 2.0); };
  return critic_loss(constant, b, 0.0).total.item() == 0.0 && critic_loss(zero, b, 10.0).total.item() == 20.0 &&
         gradient_penalty(zero, b.gp_text, b.gp_shape).item() == 2.0 &&
         gradient_penalty(first, b.gp_text, b.gp_shape).item() == 1.0 &&
         gradient_penalty(twice, b.gp_text, b.gp_shape).item() == 2.0;
}

Outcome cwgan_behavior(const Env& env) {
  Outcome o;
  const auto t0 = Clock::now();
  const fs::path dir = env.work / "gan8";
  const fs::path manifest = dir / "manifest.jsonl";
  if (!fs::exists(manifest)) {
    primgen::DatasetOptions opt;
    opt.out_dir = dir;
    opt.resolution = 8;
    opt.samples_per_config = 10;
    opt.shapes = {0, 3};      // cuboid, cone
    opt.colors = {0, 6};      // red, blue
    opt.sizes = {4, 5, 7, 8}; // height and radius levels >= 1
    primgen::generate_dataset(opt);
  }
  const auto vocab = Vocabulary::build(description_corpus(read_manifest(manifest), ""));
  const auto data = load_embedding_dataset(manifest, "", vocab);

  TrainConfig tc;
  tc.steps = 200;
  tc.batch.shapes_per_batch = 32;
  tc.lr = 1e-3;
  const TrainResult text = train_embedding(data, vocab, tc, {});

  ClassifierConfig cc;
  cc.classes = {"cone", "cuboid"};
  std::vector<std::int64_t> labels;
  for (const auto& r : data.records) labels.push_back(r.category == "cone" ? 0 : 1);
  const auto classifier = train_classifier(data.grids, labels, cc);
  const double real_acc = class_accuracy(data.grids, labels, *classifier);

  const GanDataset gd = make_gan_dataset(data, *text.model);
  GanConfig gc;
  gc.resolution = 8;
  gc.embed_dim = gd.embed_dim;
  gc.generator_steps = kGanSteps;
  gc.lr = kGanLr;
  const GanTrainResult gan = train_gan(gd, gc, dir / "gan.t2ck", dir / "gan.csv");

  const auto& w = gan.log.wasserstein;
  const double early = moving_average(w, static_cast<std::size_t>(kGanEarlyStep));
  const double late = moving_average(w, w.size() - 1);
  o.require(late < early, "W moving avg " + fmt(early) + " @" + std::to_string(kGanEarlyStep) + " -> " + fmt(late) +
                              " @end");

  const auto metrics = evaluate_generation(*gan.model, gd, *classifier, GenerationEvalOptions{});
  const double acc = metrics["class_accuracy"].get<double>();
  o.require(acc >= kClassAccuracyFloor, "class accuracy " + fmt(acc) + " (classifier on real " + fmt(real_acc) + ")");

  // One condition per (shape, color) pair: the first description of its first shape.
  double min_div = std::numeric_limits<double>::infinity();
  std::set<std::pair<std::string, int>> seen;
  for (std::size_t i = 0; i < gd.records.size(); ++i) {
    const auto key = std::make_pair(gd.records[i].category, gd.records[i].extra.value("color_index", -1));
    if (!seen.insert(key).second) continue;
    min_div = std::min(min_div, mean_pairwise_l2(generate(*gan.model, gd.text_embeddings[i][0], 10, 1)));
  }
  o.require(min_div > kDiversityFloor, "min diversity over " + std::to_string(seen.size()) + " conditions " +
                                           fmt(min_div));
  o.require(exact_critic_identities(), "constant-critic cancellation and GP closed forms exact");
  const double sec = seconds_since(t0);
  o.require(sec < kGanBudgetSec, fmt(sec, 4) + " s");
  return o;
}

// -- 9. determinism -------------------------------------------------------------------

void write_mesh(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "two.mtl") << "newmtl warm\nKd 0.9 0.4 0.1\nnewmtl cool\nKd 0.1 0.3 0.8\n";
  std::ofstream obj(dir / "two.obj");
  obj << "mtllib two.mtl\n";
  // A box on top of a wider slab.
  const double boxes[2][6] = {{-1, -1, -1, 1, 1, -0.4}, {-0.5, -0.5, -0.4, 0.5, 0.5, 1}};
  for (int b = 0; b < 2; ++b) {
    const auto* x = boxes[b];
    for (int i = 0; i < 8; ++i) {
      obj << "v " << ((i & 1) ? x[3] : x[0]) << ' ' << ((i & 2) ? x[4] : x[1]) << ' ' << ((i & 4) ? x[5] : x[2]) << '\n';
    }
    obj << "usemtl " << (b == 0 ? "cool" : "warm") << '\n';
    const int quads[6][4] = {{1, 3, 4, 2}, {5, 6, 8, 7}, {1, 2, 6, 5}, {3, 7, 8, 4}, {1, 5, 7, 3}, {2, 4, 8, 6}};
    for (const auto& q : quads) obj << "f " << q[0] + 8 * b << ' ' << q[1] + 8 * b << ' ' << q[2] + 8 * b << ' ' << q[3] + 8 * b << '\n';
  }
}

Outcome determinism(const Env& env) {
  Outcome o;
  const fs::path root = fresh_dir(env.work / "c9");
  write_mesh(root / "mesh");
  const std::string m = "data/manifest.jsonl";
  const std::vector<std::vector<std::string>> stages = {
      {"gen-primitives", "--out", "data", "--res", "8", "--samples", "3", "--shapes", "0,3", "--colors", "0,6",
       "--sizes", "4,8", "--seed", "5"},
      {"voxelize", "--mesh", "../mesh/two.obj", "--res", "16", "--solid", "--rays", "64", "--out", "vox/two.t2sv"},
      {"build-vocab", "--data", m, "--split", "", "--min-count", "2", "--out", "vocab.json"},
      {"train-embedding", "--data", m, "--split", "", "--vocab", "vocab.json", "--out", "emb.t2ck", "--steps", "20",
       "--shapes-per-batch", "6", "--word-dim", "8", "--mlp-hidden", "16", "--embed-dim", "8", "--lr", "1e-3"},
      {"eval-retrieval", "--ckpt", "emb.t2ck", "--data", m, "--split", "", "--out", "retrieval.json"},
      {"retrieve", "--ckpt", "emb.t2ck", "--data", m, "--query", "a red box", "--out", "retrieve.json"},
      {"export-embeddings", "--ckpt", "emb.t2ck", "--data", m, "--out", "emb.csv"},
      {"train-classifier", "--data", m, "--split", "", "--out", "cls.t2ck", "--steps", "20"},
      {"train-gan", "--data", m, "--split", "", "--text-ckpt", "emb.t2ck", "--out", "gan.t2ck", "--generator-steps",
       "3", "--warmup-critic-steps", "2", "--batch-size", "4"},
      {"generate", "--ckpt", "gan.t2ck", "--text", "a red box", "--n", "2", "--out", "gen"},
      {"evaluate", "--gen-ckpt", "gan.t2ck", "--classifier-ckpt", "cls.t2ck", "--data", m, "--split", "", "--out",
       "eval.json"},
      {"arith", "--ckpt", "gan.t2ck", "--data", m, "--generate", "--out", "arith", "+t:a red box", "-t:a box",
       "+t:a cone"},
  };
  // Both runs use the same absolute directory so recorded paths match.
  const fs::path run = root / "run";
  for (const char* pass : {"first", "second"}) {
    fresh_dir(run / "logs");
    for (const auto& stage : stages) {
      auto args = stage;
      args.insert(args.end(), {"--seed", "3", "--threads", "1"});
      if (stage[0] == "gen-primitives") args.resize(args.size() - 4), args.insert(args.end(), {"--threads", "1"});
      const int rc = run_cli(env, run, args, run / "logs" / (stage[0] + ".out"));
      if (rc != 0) {
        o.require(false, std::string(pass) + " run: " + stage[0] + " exit " + std::to_string(rc));
        return o;
      }
    }
    if (std::string(pass) == "first") fs::rename(run, root / "first");
  }
  const std::string diff = compare_trees(root / "first", run);
  o.require(diff.empty(), diff.empty() ? std::to_string(stages.size()) + " stages, " +
                                             std::to_string(tree(run).size()) + " files byte-identical"
                                       : diff);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const Env&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Env env;
  std::string t2s_path;
  std::string work = (fs::temp_directory_path() / "t2s_acceptance").string();
  std::vector<int> only;
  bool keep = false;
  app.add_option("--t2s", t2s_path, "Path to the t2s executable (criteria 1 and 9)");
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);
  env.t2s = t2s_path;
  env.work = work;
  fs::create_directories(env.work);

  const std::vector<Criterion> criteria = {
      {1, "dataset regeneration", dataset_regeneration},
      {2, "retrieval ablation ordering", retrieval_ablation},
      {3, "random-baseline sanity", random_baseline},
      {4, "gradient correctness", gradient_correctness},
      {5, "loss-formula oracles", loss_oracles},
      {6, "metric oracles", metric_oracles},
      {7, "voxelizer fidelity", voxelizer_fidelity},
      {8, "CWGAN desk-scale behavior", cwgan_behavior},
      {9, "determinism", determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome out;
    const auto t0 = Clock::now();
    try {
      if ((c.id == 1 || c.id == 9) && !fs::exists(env.t2s)) throw std::runtime_error("--t2s executable not found");
      out = c.run(env);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    failures += !out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << ", "
              << fmt(seconds_since(t0), 3) << " s): " << out.detail << std::endl;
  }
  if (!keep) fs::remove_all(env.work);
  return failures == 0 ? 0 : 1;
}
