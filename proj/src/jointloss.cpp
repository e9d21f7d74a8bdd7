// SPDX-License-Identifier: Apache-2.0
#include "t2s/jointloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "t2s/error.hpp"

namespace t2s {

using diff::Tensor;
namespace d = diff;

LossConfig LossConfig::for_mode(const std::string& mode, LossConfig c) {
  if (mode == "full") return c;
  if (mode == "lba_only") {
    c.gamma = 0.0;
  } else if (mode == "ml_only") {
    c.tst_weight = c.sts_weight = 0.0;
  } else if (mode == "tst_only") {
    c.sts_weight = 0.0;
  } else if (mode == "lba_tst") {
    c.sts_weight = 0.0;
    c.gamma = 0.0;
  } else {
    throw ConfigError("unknown ablation mode '" + mode + "'");
  }
  return c;
}

AssociationProbs association_probs(const Tensor& text, const Tensor& shape) {
  if (text.rank() != 2 || shape.rank() != 2 || text.size(1) != shape.size(1)) {
    throw ShapeError("association_probs: text " + d::shape_str(text.shape()) + " vs shape " +
                     d::shape_str(shape.shape()));
  }
  AssociationProbs p;
  p.similarity = d::matmul_nt(text, shape);
  p.text_shape = d::softmax_rows(p.similarity);
  p.shape_text = d::softmax_rows(d::matmul_nt(shape, text));
  p.tst = d::matmul(p.text_shape, p.shape_text);
  p.sts = d::matmul(p.shape_text, p.text_shape);
  p.shape_visit = d::mean(p.text_shape, 0, true);
  p.text_visit = d::mean(p.shape_text, 0, true);
  return p;
}

AssociationTerms round_trip_terms(const Tensor& round_trip, const Tensor& visit, const Labels& classes) {
  const std::int64_t k = round_trip.size(0);
  if (static_cast<std::int64_t>(classes.size()) != k || round_trip.size(1) != k) {
    throw ShapeError("round-trip matrix " + d::shape_str(round_trip.shape()) + " vs " +
                     std::to_string(classes.size()) + " labels");
  }
  std::vector<std::int64_t> flat;
  std::vector<double> weight;
  for (std::int64_t i = 0; i < k; ++i) {
    const auto same = std::count(classes.begin(), classes.end(), classes[i]);
    for (std::int64_t j = 0; j < k; ++j) {
      if (classes[j] != classes[i]) continue;
      flat.push_back(i * k + j);
      weight.push_back(-1.0 / static_cast<double>(same * k));
    }
  }
  const auto picked = d::index_rows(d::reshape(round_trip, {k * k, 1}), flat);
  const auto count = static_cast<std::int64_t>(flat.size());
  AssociationTerms t;
  t.round_trip = d::sum(d::mul(d::log(picked), d::constant({count, 1}, std::move(weight))));
  t.visit = d::scale(d::mean(d::log(visit)), -1.0);
  return t;
}

AssociationTerms lba_tst_terms(const AssociationProbs& p, const Labels& text_class) {
  return round_trip_terms(p.tst, p.shape_visit, text_class);
}

AssociationTerms lba_sts_terms(const AssociationProbs& p, const Labels& shape_class) {
  return round_trip_terms(p.sts, p.text_visit, shape_class);
}

Tensor lba_tst_loss(const AssociationProbs& p, const Labels& text_class, double lambda) {
  return lba_tst_terms(p, text_class).total(lambda);
}

Tensor lba_sts_loss(const AssociationProbs& p, const Labels& shape_class, double lambda) {
  return lba_sts_terms(p, shape_class).total(lambda);
}

namespace {

constexpr double kNoNegatives = -std::numeric_limits<double>::infinity();

// log sum_{k: negative of row l} exp(alpha + sim[l, k]) for every row, with
// rows lacking negatives reported through `empty` (their value is a finite
// placeholder that is never used).
Tensor log_negative_mass(const Tensor& sim, const Labels& row_class, const Labels& col_class,
                         double alpha, std::vector<bool>& empty) {
  const std::int64_t r = sim.size(0), c = sim.size(1);
  // Non-negative cells get a large negative offset so exp() yields exactly 0.
  std::vector<double> mask(static_cast<std::size_t>(r * c), -1e9);
  std::vector<double> shift(static_cast<std::size_t>(r), 0.0);
  empty.assign(static_cast<std::size_t>(r), true);
  const auto s = sim.data();
  for (std::int64_t i = 0; i < r; ++i) {
    double best = kNoNegatives;
    for (std::int64_t j = 0; j < c; ++j) {
      if (row_class[i] == col_class[j]) continue;
      mask[i * c + j] = 0.0;
      best = std::max(best, s[i * c + j]);
      empty[i] = false;
    }
    shift[i] = empty[i] ? 0.0 : best;
  }
  // Empty rows sum to zero; adding 1 keeps log finite and the row unused.
  std::vector<double> guard(static_cast<std::size_t>(r), 0.0);
  for (std::int64_t i = 0; i < r; ++i) guard[i] = empty[i] ? 1.0 : 0.0;
  const Tensor shift_t = d::constant({r, 1}, shift);
  const Tensor mass = d::sum(d::exp(d::add(d::sub(sim, shift_t), d::constant({r, c}, std::move(mask)))), 1, true);
  return d::add_scalar(d::add(d::log(d::add(mass, d::constant({r, 1}, std::move(guard)))), shift_t), alpha);
}

struct PairSet {
  std::vector<std::int64_t> left, right, flat;
};

// 1/(2|P|) sum_P [log(V_i + V_j) - sim_ij]_+^2 with log V given per side.
Tensor lifted_loss(const Tensor& sim, const Tensor& log_v_left, const std::vector<bool>& empty_left,
                   const Tensor& log_v_right, const std::vector<bool>& empty_right, const PairSet& pairs,
                   double pair_count) {
  if (pairs.left.empty()) throw InvalidArgument("metric loss needs at least one positive pair");
  PairSet both, only_left, only_right;
  for (std::size_t p = 0; p < pairs.left.size(); ++p) {
    const bool el = empty_left[pairs.left[p]], er = empty_right[pairs.right[p]];
    PairSet* dst = !el && !er ? &both : !el ? &only_left : !er ? &only_right : nullptr;
    if (!dst) continue;  // anchor pair without negatives is inactive
    dst->left.push_back(pairs.left[p]);
    dst->right.push_back(pairs.right[p]);
    dst->flat.push_back(pairs.flat[p]);
  }
  const std::int64_t cells = sim.numel();
  const Tensor sim_flat = d::reshape(sim, {cells, 1});
  std::vector<Tensor> hinge_terms;
  auto hinge = [&](const Tensor& log_mass, const PairSet& set) {
    const Tensor s = d::index_rows(sim_flat, set.flat);
    const Tensor h = d::relu(d::sub(log_mass, s));
    hinge_terms.push_back(d::sum(d::square(h)));
  };
  if (!both.left.empty()) {
    const Tensor a = d::index_rows(log_v_left, both.left);
    const Tensor b = d::index_rows(log_v_right, both.right);
    std::vector<double> mx(both.left.size());
    for (std::size_t i = 0; i < mx.size(); ++i) mx[i] = std::max(a.data()[i], b.data()[i]);
    const auto rows = static_cast<std::int64_t>(mx.size());
    const Tensor m = d::constant({rows, 1}, std::move(mx));
    hinge(d::add(m, d::log(d::add(d::exp(d::sub(a, m)), d::exp(d::sub(b, m))))), both);
  }
  if (!only_left.left.empty()) hinge(d::index_rows(log_v_left, only_left.left), only_left);
  if (!only_right.left.empty()) hinge(d::index_rows(log_v_right, only_right.right), only_right);
  if (hinge_terms.empty()) return d::scale(d::sum(sim), 0.0);
  Tensor total = hinge_terms[0];
  for (std::size_t i = 1; i < hinge_terms.size(); ++i) total = d::add(total, hinge_terms[i]);
  return d::scale(total, 1.0 / (2.0 * pair_count));
}

void check_labels(const Tensor& e, const Labels& c, const char* what) {
  if (e.rank() != 2 || e.size(0) != static_cast<std::int64_t>(c.size())) {
    throw ShapeError(std::string(what) + ": " + d::shape_str(e.shape()) + " vs " + std::to_string(c.size()) +
                     " labels");
  }
}

}  // namespace

Tensor ml_loss_within(const Tensor& emb, const Labels& classes, double alpha) {
  check_labels(emb, classes, "ml_loss_within");
  const std::int64_t n = emb.size(0);
  const Tensor sim = d::matmul_nt(emb, emb);
  std::vector<bool> empty;
  const Tensor log_v = log_negative_mass(sim, classes, classes, alpha, empty);
  PairSet pairs;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      if (classes[i] != classes[j]) continue;
      pairs.left.push_back(i);
      pairs.right.push_back(j);
      pairs.flat.push_back(i * n + j);
    }
  }
  return lifted_loss(sim, log_v, empty, log_v, empty, pairs, static_cast<double>(pairs.left.size()));
}

Tensor ml_loss_cross(const Tensor& text, const Labels& text_class, const Tensor& shape, const Labels& shape_class,
                     double alpha) {
  check_labels(text, text_class, "ml_loss_cross");
  check_labels(shape, shape_class, "ml_loss_cross");
  const std::int64_t m = text.size(0), n = shape.size(0);
  const Tensor sim = d::matmul_nt(text, shape);
  std::vector<bool> empty_text, empty_shape;
  const Tensor log_v_text = log_negative_mass(sim, text_class, shape_class, alpha, empty_text);
  const Tensor log_v_shape = log_negative_mass(d::matmul_nt(shape, text), shape_class, text_class, alpha, empty_shape);
  PairSet pairs;
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      if (text_class[i] != shape_class[j]) continue;
      pairs.left.push_back(i);
      pairs.right.push_back(j);
      pairs.flat.push_back(i * n + j);
    }
  }
  return lifted_loss(sim, log_v_text, empty_text, log_v_shape, empty_shape, pairs,
                     static_cast<double>(pairs.left.size()));
}

Tensor norm_penalty(const Tensor& emb, double threshold) {
  return d::sum(d::square(d::relu(d::add_scalar(d::l2_norm_rows(emb), -threshold))));
}

LossBreakdown total_loss(const Tensor& text, const Labels& text_class, const Tensor& shape,
                         const Labels& shape_class, const LossConfig& c) {
  check_labels(text, text_class, "total_loss");
  check_labels(shape, shape_class, "total_loss");
  LossBreakdown b;
  std::vector<Tensor> parts;
  if (c.tst_weight != 0.0 || c.sts_weight != 0.0) {
    const AssociationProbs p = association_probs(text, shape);
    if (c.tst_weight != 0.0) {
      const auto t = lba_tst_terms(p, text_class);
      b.r_tst = t.round_trip.item();
      b.h_tst = t.visit.item();
      parts.push_back(d::scale(t.total(c.lambda), c.tst_weight));
    }
    if (c.sts_weight != 0.0) {
      const auto t = lba_sts_terms(p, shape_class);
      b.r_sts = t.round_trip.item();
      b.h_sts = t.visit.item();
      parts.push_back(d::scale(t.total(c.lambda), c.sts_weight));
    }
  }
  if (c.gamma != 0.0) {
    const Tensor tt = ml_loss_within(text, text_class, c.alpha);
    const Tensor ts = ml_loss_cross(text, text_class, shape, shape_class, c.alpha);
    b.tt = tt.item();
    b.ts = ts.item();
    parts.push_back(d::scale(d::add(tt, ts), c.gamma));
  }
  if (c.norm_weight != 0.0) {
    const Tensor pen = d::add(norm_penalty(text, c.norm_threshold), norm_penalty(shape, c.norm_threshold));
    b.norm = pen.item();
    parts.push_back(d::scale(pen, c.norm_weight));
  }
  if (parts.empty()) {
    b.total = d::scale(d::add(d::sum(text), d::sum(shape)), 0.0);
  } else {
    b.total = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) b.total = d::add(b.total, parts[i]);
  }
  b.total_value = b.total.item();
  return b;
}

void write_loss_csv_header(std::ostream& os) {
  os << "step,L_R_TST,L_H_TST,L_R_STS,L_H_STS,L_TT,L_TS,norm_pen,total\n";
}

void write_loss_csv_row(std::ostream& os, std::int64_t step, const LossBreakdown& b) {
  os << step << ',' << b.r_tst << ',' << b.h_tst << ',' << b.r_sts << ',' << b.h_sts << ',' << b.tt << ','
     << b.ts << ',' << b.norm << ',' << b.total_value << '\n';
}

}  // namespace t2s
