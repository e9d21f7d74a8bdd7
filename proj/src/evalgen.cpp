// SPDX-License-Identifier: Apache-2.0
#include "t2s/evalgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "t2s/color.hpp"
#include "t2s/diff/checkpoint.hpp"
#include "t2s/diff/optim.hpp"
#include "t2s/encoders.hpp"
#include "t2s/error.hpp"
#include "t2s/rng.hpp"

namespace t2s {

namespace d = diff;
using d::Tensor;

double iou(const VoxelGrid& generated, const VoxelGrid& truth, double threshold) {
  if (!(generated.dims() == truth.dims())) throw ShapeError("IoU needs grids of equal dimensions");
  std::size_t inter = 0, uni = 0;
  for (std::size_t v = 0; v < generated.voxel_count(); ++v) {
    const bool a = generated.occupancy(v) > threshold;
    const bool b = truth.occupancy(v) > threshold;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double ColorHistogram::ground_distance(std::size_t a, std::size_t b) const {
  const int ha = static_cast<int>(a) / sat_bins, sa = static_cast<int>(a) % sat_bins;
  const int hb = static_cast<int>(b) / sat_bins, sb = static_cast<int>(b) % sat_bins;
  const int dh = std::abs(ha - hb);
  return std::min(dh, hue_bins - dh) + std::abs(sa - sb);
}

void ColorHistogram::validate() const {
  if (hue_bins < 1 || sat_bins < 1 || bins.size() != static_cast<std::size_t>(hue_bins * sat_bins)) {
    throw InvalidArgument("histogram size does not match its bin geometry");
  }
  double total = 0.0;
  for (double b : bins) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidArgument("histogram bins must be finite and nonnegative");
    total += b;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("histogram is not normalized (sum " + std::to_string(total) + ")");
}

std::optional<ColorHistogram> color_histogram(const VoxelGrid& grid, double threshold, int hue_bins, int sat_bins) {
  if (hue_bins < 1 || sat_bins < 1) throw InvalidArgument("histogram needs at least one bin per axis");
  ColorHistogram h{hue_bins, sat_bins, std::vector<double>(static_cast<std::size_t>(hue_bins * sat_bins), 0.0)};
  std::size_t count = 0;
  for (std::size_t v = 0; v < grid.voxel_count(); ++v) {
    if (grid.occupancy(v) <= threshold) continue;
    const ColorHSV hsv = rgb_to_hsv(grid.color(v));
    const int hb = std::min(static_cast<int>(hsv.h * hue_bins), hue_bins - 1);
    const int sb = std::clamp(static_cast<int>(hsv.s * sat_bins), 0, sat_bins - 1);
    h.bins[static_cast<std::size_t>(hb * sat_bins + sb)] += 1.0;
    ++count;
  }
  if (count == 0) return std::nullopt;
  for (double& b : h.bins) b /= static_cast<double>(count);
  return h;
}

namespace {

// Successive shortest paths on the transport network source -> a_i -> b_j -> sink.
class TransportSolver {
 public:
  TransportSolver(const std::vector<double>& supply, const std::vector<double>& demand,
                  const std::vector<std::vector<double>>& cost)
      : nodes_(supply.size() + demand.size() + 2), adj_(nodes_) {
    source_ = nodes_ - 2;
    sink_ = nodes_ - 1;
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < supply.size(); ++i) add_edge(source_, i, supply[i], 0.0);
    for (std::size_t j = 0; j < demand.size(); ++j) add_edge(supply.size() + j, sink_, demand[j], 0.0);
    for (std::size_t i = 0; i < supply.size(); ++i) {
      for (std::size_t j = 0; j < demand.size(); ++j) add_edge(i, supply.size() + j, inf, cost[i][j]);
    }
  }

  double solve(double total) {
    constexpr double kTiny = 1e-15;
    double shipped = 0.0, cost = 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    while (total - shipped > 1e-13) {
      // Bellman-Ford: residual costs can be negative on reverse edges.
      std::vector<double> dist(nodes_, inf);
      std::vector<std::size_t> via(nodes_, SIZE_MAX);
      dist[source_] = 0.0;
      for (std::size_t round = 0; round < nodes_; ++round) {
        bool changed = false;
        for (std::size_t u = 0; u < nodes_; ++u) {
          if (dist[u] == inf) continue;
          for (std::size_t e : adj_[u]) {
            const Edge& ed = edges_[e];
            if (ed.cap > kTiny && dist[u] + ed.cost < dist[ed.to] - 1e-12) {
              dist[ed.to] = dist[u] + ed.cost;
              via[ed.to] = e;
              changed = true;
            }
          }
        }
        if (!changed) break;
      }
      if (dist[sink_] == inf) break;
      double push = total - shipped;
      for (std::size_t v = sink_; v != source_; v = edges_[via[v] ^ 1].to) push = std::min(push, edges_[via[v]].cap);
      for (std::size_t v = sink_; v != source_; v = edges_[via[v] ^ 1].to) {
        edges_[via[v]].cap -= push;
        edges_[via[v] ^ 1].cap += push;
      }
      shipped += push;
      cost += push * dist[sink_];
    }
    return cost;
  }

 private:
  struct Edge {
    std::size_t to;
    double cap;
    double cost;
  };

  void add_edge(std::size_t from, std::size_t to, double cap, double cost) {
    adj_[from].push_back(edges_.size());
    edges_.push_back({to, cap, cost});
    adj_[to].push_back(edges_.size());
    edges_.push_back({from, 0.0, -cost});
  }

  std::size_t nodes_;
  std::size_t source_ = 0, sink_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adj_;
};

}  // namespace

double color_emd(const ColorHistogram& a, const ColorHistogram& b) {
  a.validate();
  b.validate();
  if (a.hue_bins != b.hue_bins || a.sat_bins != b.sat_bins) throw InvalidArgument("histogram geometries differ");
  // Mass already in place costs nothing, so only the surplus moves.
  std::vector<double> supply, demand;
  std::vector<std::size_t> from, to;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a.bins[i] - b.bins[i];
    if (diff > 0) {
      supply.push_back(diff);
      from.push_back(i);
    } else if (diff < 0) {
      demand.push_back(-diff);
      to.push_back(i);
    }
  }
  if (supply.empty() || demand.empty()) return 0.0;
  std::vector<std::vector<double>> cost(supply.size(), std::vector<double>(demand.size()));
  for (std::size_t i = 0; i < supply.size(); ++i) {
    for (std::size_t j = 0; j < demand.size(); ++j) cost[i][j] = a.ground_distance(from[i], to[j]);
  }
  double total_supply = 0.0, total_demand = 0.0;
  for (double s : supply) total_supply += s;
  for (double s : demand) total_demand += s;
  return TransportSolver(supply, demand, cost).solve(std::min(total_supply, total_demand));
}

double inception_score(const std::vector<std::vector<double>>& class_probs) {
  if (class_probs.empty()) throw InvalidArgument("inception score needs at least one distribution");
  constexpr double kFloor = 1e-12;
  const std::size_t c = class_probs[0].size();
  std::vector<double> marginal(c, 0.0);
  for (const auto& row : class_probs) {
    if (row.size() != c) throw ShapeError("class distributions have different lengths");
    double total = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw InvalidArgument("class probabilities must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) throw InvalidArgument("class distribution is not normalized");
    for (std::size_t k = 0; k < c; ++k) marginal[k] += row[k];
  }
  for (double& m : marginal) m /= static_cast<double>(class_probs.size());
  double kl_sum = 0.0;
  for (const auto& row : class_probs) {
    for (std::size_t k = 0; k < c; ++k) {
      if (row[k] > 0.0) kl_sum += row[k] * (std::log(std::max(row[k], kFloor)) - std::log(std::max(marginal[k], kFloor)));
    }
  }
  return std::exp(kl_sum / static_cast<double>(class_probs.size()));
}

nlohmann::json ClassifierConfig::to_json() const {
  return {{"classes", classes}, {"resolution", resolution}, {"width", width}, {"steps", steps},
          {"batch_size", batch_size}, {"lr", lr}, {"seed", seed}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.classes = j.value("classes", c.classes);
  c.resolution = j.value("resolution", c.resolution);
  c.width = j.value("width", c.width);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  return c;
}

ShapeClassifier::ShapeClassifier(const ClassifierConfig& config) : config_(config) {
  if (config_.classes.size() < 2) throw ConfigError("classifier needs at least two classes");
  if (config_.resolution < 4 || config_.resolution % 4 != 0) throw ConfigError("classifier resolution must be a multiple of 4");
  Rng rng(hash_seed({config_.seed, 0xc1a5ULL}));
  conv1_ = d::Conv3d(store_, "cls.conv1", 4, config_.width, {3, 2, 1}, rng);
  conv2_ = d::Conv3d(store_, "cls.conv2", config_.width, 2 * config_.width, {3, 2, 1}, rng);
  head_ = d::Linear(store_, "cls.fc", 2 * config_.width, static_cast<std::int64_t>(num_classes()), rng);
}

std::int64_t ShapeClassifier::class_index(const std::string& name) const {
  const auto it = std::find(config_.classes.begin(), config_.classes.end(), name);
  if (it == config_.classes.end()) throw InvalidArgument("class '" + name + "' is not known to the classifier");
  return it - config_.classes.begin();
}

Tensor ShapeClassifier::logits(const Tensor& grids) const {
  if (grids.rank() != 5 || grids.size(2) != config_.resolution) {
    throw ShapeError("classifier expects [N, 4, " + std::to_string(config_.resolution) + "^3], got " +
                     d::shape_str(grids.shape()));
  }
  Tensor x = d::relu(conv2_(d::relu(conv1_(grids))));
  x = d::avg_pool3d(x, x.size(2));
  return head_(d::reshape(x, {x.size(0), x.size(1)}));
}

std::vector<std::vector<double>> ShapeClassifier::predict_proba(const std::vector<VoxelGrid>& grids) const {
  d::NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  const std::size_t c = num_classes();
  for (std::size_t start = 0; start < grids.size(); start += 64) {
    std::vector<const VoxelGrid*> chunk;
    for (std::size_t i = start; i < std::min(grids.size(), start + 64); ++i) chunk.push_back(&grids[i]);
    const Tensor p = d::softmax_rows(logits(grids_to_tensor(chunk)));
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      out.emplace_back(p.data().begin() + static_cast<std::ptrdiff_t>(r * c),
                       p.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
    }
  }
  return out;
}

std::vector<std::int64_t> ShapeClassifier::predict(const std::vector<VoxelGrid>& grids) const {
  std::vector<std::int64_t> out;
  for (const auto& row : predict_proba(grids)) out.push_back(std::max_element(row.begin(), row.end()) - row.begin());
  return out;
}

void ShapeClassifier::save(const std::filesystem::path& path) const {
  d::Checkpoint ck;
  ck.put_store("classifier.", store_);
  ck.meta = {{"kind", "classifier"}, {"config", config_.to_json()}};
  ck.save(path);
}

std::unique_ptr<ShapeClassifier> ShapeClassifier::load(const std::filesystem::path& path) {
  const auto ck = d::Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "classifier") throw FormatError(path.string() + " is not a classifier checkpoint");
  auto model = std::make_unique<ShapeClassifier>(ClassifierConfig::from_json(ck.meta.at("config")));
  ck.load_store("classifier.", model->store_);
  return model;
}

std::unique_ptr<ShapeClassifier> train_classifier(const std::vector<VoxelGrid>& grids,
                                                  const std::vector<std::int64_t>& labels,
                                                  const ClassifierConfig& config) {
  if (grids.empty() || grids.size() != labels.size()) throw InvalidArgument("classifier needs one label per grid");
  auto model = std::make_unique<ShapeClassifier>(config);
  const auto c = static_cast<std::int64_t>(model->num_classes());
  for (auto l : labels) {
    if (l < 0 || l >= c) throw InvalidArgument("classifier label out of range");
  }
  d::AdamConfig opt_config;
  opt_config.lr = config.lr;
  d::Adam opt(model->store(), opt_config);
  Rng rng(hash_seed({config.seed, 0x7ca1ULL}));
  const auto n = std::min<std::int64_t>(config.batch_size, static_cast<std::int64_t>(grids.size()));
  for (std::int64_t step = 0; step < config.steps; ++step) {
    std::vector<const VoxelGrid*> batch;
    std::vector<double> onehot(static_cast<std::size_t>(n * c), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::size_t k = rng.below(grids.size());
      batch.push_back(&grids[k]);
      onehot[static_cast<std::size_t>(i * c + labels[k])] = 1.0;
    }
    const Tensor logp = d::log_softmax_rows(model->logits(grids_to_tensor(batch)));
    const Tensor loss = d::scale(d::sum(d::mul(logp, d::constant({n, c}, std::move(onehot)))), -1.0 / static_cast<double>(n));
    d::backward(loss);
    opt.step();
  }
  return model;
}

double class_accuracy(const std::vector<VoxelGrid>& generated, const std::vector<std::int64_t>& condition_classes,
                      const ShapeClassifier& classifier) {
  if (generated.size() != condition_classes.size()) throw InvalidArgument("one condition class per generated grid");
  if (generated.empty()) throw InvalidArgument("class accuracy of an empty set");
  const auto pred = classifier.predict(generated);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto c = condition_classes[i];
    if (c < 0 || c >= static_cast<std::int64_t>(classifier.num_classes())) throw InvalidArgument("class set mismatch");
    hits += pred[i] == c;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

nlohmann::json generation_metrics(const std::vector<GenerationSample>& samples, const ShapeClassifier& classifier,
                                  double occupancy_threshold) {
  if (samples.empty()) throw InvalidArgument("no generated samples to evaluate");
  std::vector<VoxelGrid> generated;
  std::vector<std::int64_t> conditions;
  double iou_sum = 0.0, emd_sum = 0.0;
  std::size_t emd_count = 0, emd_skipped = 0;
  for (const auto& s : samples) {
    iou_sum += iou(s.generated, s.truth, occupancy_threshold);
    const auto hg = color_histogram(s.generated, occupancy_threshold);
    const auto ht = color_histogram(s.truth, occupancy_threshold);
    if (hg && ht) {
      emd_sum += color_emd(*hg, *ht);
      ++emd_count;
    } else {
      ++emd_skipped;
    }
    generated.push_back(s.generated);
    conditions.push_back(classifier.class_index(s.category));
  }
  const auto n = static_cast<double>(samples.size());
  nlohmann::json out;
  out["samples"] = samples.size();
  out["iou"] = iou_sum / n;
  out["inception_score"] = inception_score(classifier.predict_proba(generated));
  out["color_emd"] = emd_count ? nlohmann::json(emd_sum / static_cast<double>(emd_count)) : nlohmann::json(nullptr);
  out["color_emd_skipped"] = emd_skipped;
  out["class_accuracy"] = class_accuracy(generated, conditions, classifier);
  out["occupancy_threshold"] = occupancy_threshold;
  return out;
}

nlohmann::json evaluate_generation(const GanModel& model, const GanDataset& data, const ShapeClassifier& classifier,
                                   const GenerationEvalOptions& options) {
  std::vector<GenerationSample> samples;
  for (std::size_t s = 0; s < data.grids.size(); ++s) {
    const auto& texts = data.text_embeddings[s];
    const auto count = std::min<std::size_t>(texts.size(), static_cast<std::size_t>(options.descriptions_per_shape));
    for (std::size_t k = 0; k < count; ++k) {
      auto grids = generate(model, texts[k], 1, hash_seed({options.seed, s, k}));
      samples.push_back({std::move(grids[0]), data.grids[s], data.records[s].category});
    }
  }
  auto out = generation_metrics(samples, classifier, options.occupancy_threshold);
  out["seed"] = options.seed;
  out["descriptions_per_shape"] = options.descriptions_per_shape;
  return out;
}

}  // namespace t2s
