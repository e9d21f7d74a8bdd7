// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "t2s/error.hpp"
#include "t2s/jointloss.hpp"
#include "t2s/rng.hpp"

using namespace t2s;
namespace d = t2s::diff;
using oracle::Matrix;

namespace {

d::Tensor to_tensor(const Matrix& m) {
  std::vector<double> v;
  for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
  return d::constant({static_cast<std::int64_t>(m.size()), static_cast<std::int64_t>(m[0].size())}, v);
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, std::vector<double>(cols));
  for (auto& row : m)
    for (auto& v : row) v = rng.uniform(-scale, scale);
  return m;
}

// Text labels drawn from the shape labels so every description has its shape.
struct RandomBatch {
  Matrix text, shape;
  Labels text_class, shape_class;
};

RandomBatch random_batch(std::uint64_t seed) {
  Rng rng(seed);
  RandomBatch b;
  const std::size_t n = 1 + rng.below(4), m = 1 + rng.below(4), dim = 2 + rng.below(3);
  for (std::size_t j = 0; j < n; ++j) b.shape_class.push_back(static_cast<std::int64_t>(rng.below(3)));
  for (std::size_t i = 0; i < m; ++i) b.text_class.push_back(b.shape_class[rng.below(n)]);
  b.text = random_matrix(rng, m, dim);
  b.shape = random_matrix(rng, n, dim);
  return b;
}

bool has_pairs_within(const Labels& c) {
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j)
      if (c[i] == c[j]) return true;
  return false;
}

}  // namespace

TEST_CASE("association probabilities: zero similarity is uniform") {
  const auto p = association_probs(d::constant({2, 3}, std::vector<double>(6, 0.0)),
                                   d::constant({3, 3}, std::vector<double>(9, 0.0)));
  for (double v : p.text_shape.data()) CHECK(v == doctest::Approx(1.0 / 3));
  for (double v : p.shape_visit.data()) CHECK(v == doctest::Approx(1.0 / 3));
}

TEST_CASE("association probabilities: scaled identity round trip is near identity") {
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 10.0;
  const auto p = association_probs(d::constant({3, 3}, eye), d::constant({3, 3}, eye));
  for (int i = 0; i < 3; ++i) CHECK(p.tst.at({i, i}) > 0.999);
}

TEST_CASE("association probabilities match the direct product of softmaxes") {
  Rng rng(3);
  const Matrix t = random_matrix(rng, 3, 5), s = random_matrix(rng, 4, 5);
  const auto p = association_probs(to_tensor(t), to_tensor(s));
  const auto ref = oracle::associate(t, s);
  for (std::int64_t i = 0; i < 3; ++i) {
    double row = 0.0;
    for (std::int64_t j = 0; j < 3; ++j) {
      CHECK(std::abs(p.tst.at({i, j}) - ref.tst[i][j]) < 1e-12);
      row += p.tst.at({i, j});
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("TST loss: single pair has zero round-trip term") {
  const auto p = association_probs(d::constant({1, 2}, {0.3, -0.2}), d::constant({1, 2}, {1.0, 0.5}));
  const auto terms = lba_tst_terms(p, {0});
  CHECK(std::abs(terms.round_trip.item()) < 1e-15);
}

TEST_CASE("TST loss: uniform visit gives ln n") {
  const auto p = association_probs(d::constant({2, 2}, std::vector<double>(4, 0.0)),
                                   d::constant({3, 2}, std::vector<double>(6, 0.0)));
  CHECK(lba_tst_terms(p, {0, 1}).visit.item() == doctest::Approx(std::log(3.0)));
}

TEST_CASE("TST loss: two classes with hand-set similarities") {
  // Texts 0, 1 describe shape 0; texts 2, 3 describe shape 1.
  const d::Tensor text = d::constant({4, 2}, {1, 0, 0.5, 0, 0, 1, 0, 2});
  const d::Tensor shape = d::constant({2, 2}, {1, 0, 0, 1});
  const auto p = association_probs(text, shape);
  // Scripted evaluation.
  const double sims[4][2] = {{1, 0}, {0.5, 0}, {0, 1}, {0, 2}};
  double ts[4][2], st[2][4];
  for (int i = 0; i < 4; ++i) {
    const double z = std::exp(sims[i][0]) + std::exp(sims[i][1]);
    for (int j = 0; j < 2; ++j) ts[i][j] = std::exp(sims[i][j]) / z;
  }
  for (int j = 0; j < 2; ++j) {
    double z = 0;
    for (int i = 0; i < 4; ++i) z += std::exp(sims[i][j]);
    for (int i = 0; i < 4; ++i) st[j][i] = std::exp(sims[i][j]) / z;
  }
  double lr = 0.0;
  const int cls[4] = {0, 0, 1, 1};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      if (cls[k] != cls[i]) continue;
      const double tst = ts[i][0] * st[0][k] + ts[i][1] * st[1][k];
      lr -= 0.5 * std::log(tst) / 4.0;
    }
  double lh = 0.0;
  for (int j = 0; j < 2; ++j) lh -= std::log((ts[0][j] + ts[1][j] + ts[2][j] + ts[3][j]) / 4.0) / 2.0;
  CHECK(std::abs(lba_tst_loss(p, {0, 0, 1, 1}, 0.25).item() - (lr + 0.25 * lh)) < 1e-10);
}

TEST_CASE("STS loss: single shape and block-diagonal limit") {
  const auto single = association_probs(d::constant({2, 2}, {1, 2, 3, 4}), d::constant({1, 2}, {0.1, 0.2}));
  CHECK(std::abs(lba_sts_terms(single, {0}).round_trip.item()) < 1e-12);

  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 10.0;
  const auto sharp = association_probs(d::constant({3, 3}, eye), d::constant({3, 3}, eye));
  CHECK(lba_sts_terms(sharp, {0, 1, 2}).round_trip.item() < 1e-3);
}

TEST_CASE("round-trip loss approaches the target entropy as block-diagonal scale grows") {
  // One description per shape: the target is a point mass, so the loss tends to 0.
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 100.0;
  const auto sharp = association_probs(d::constant({3, 3}, eye), d::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  CHECK(lba_tst_terms(sharp, {0, 1, 2}).round_trip.item() < 1e-9);
  // Two descriptions per shape: the uniform target over siblings bounds it by ln 2.
  const d::Tensor text = d::constant({4, 2}, {100, 0, 100, 0, 0, 100, 0, 100});
  const d::Tensor shape = d::constant({2, 2}, {1, 0, 0, 1});
  const auto p = association_probs(text, shape);
  CHECK(lba_tst_terms(p, {0, 0, 1, 1}).round_trip.item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("association losses match scripted evaluation on random batches") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto b = random_batch(seed);
    const auto p = association_probs(to_tensor(b.text), to_tensor(b.shape));
    const auto ref = oracle::associate(b.text, b.shape);
    CHECK(std::abs(lba_tst_loss(p, b.text_class, 0.25).item() -
                   oracle::association_loss(ref.tst, ref.shape_visit, b.text_class, 0.25)) < 1e-10);
    CHECK(std::abs(lba_sts_loss(p, b.shape_class, 0.7).item() -
                   oracle::association_loss(ref.sts, ref.text_visit, b.shape_class, 0.7)) < 1e-10);
  }
}

TEST_CASE("metric loss: no negatives and satisfied margins give zero") {
  const d::Tensor e = d::constant({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(ml_loss_within(e, {0, 0, 0}, 0.5).item() == 0.0);

  // Positive similarity 10, negatives -10, alpha 1.
  const d::Tensor t = d::constant({2, 2}, {std::sqrt(10.0), 0, -std::sqrt(10.0), 0});
  const d::Tensor s = d::constant({2, 2}, {std::sqrt(10.0), 0, -std::sqrt(10.0), 0});
  CHECK(ml_loss_cross(t, {0, 1}, s, {0, 1}, 1.0).item() == 0.0);
}

TEST_CASE("metric loss without positive pairs is rejected") {
  const d::Tensor e = d::constant({2, 2}, {1, 0, 0, 1});
  CHECK_THROWS_AS(ml_loss_within(e, {0, 1}, 0.5), InvalidArgument);
}

TEST_CASE("metric losses match scripted evaluation on random batches") {
  int within_checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto b = random_batch(seed + 1000);
    CHECK(std::abs(ml_loss_cross(to_tensor(b.text), b.text_class, to_tensor(b.shape), b.shape_class, 0.5).item() -
                   oracle::ml_cross(b.text, b.text_class, b.shape, b.shape_class, 0.5)) < 1e-10);
    if (has_pairs_within(b.text_class)) {
      ++within_checked;
      CHECK(std::abs(ml_loss_within(to_tensor(b.text), b.text_class, 0.5).item() -
                     oracle::ml_within(b.text, b.text_class, 0.5)) < 1e-10);
    }
  }
  CHECK(within_checked > 20);
}

TEST_CASE("norm penalty values and gradient") {
  CHECK(norm_penalty(d::constant({1, 2}, {3, 4}), 10.0).item() == 0.0);
  CHECK(norm_penalty(d::constant({1, 2}, {0, 12}), 10.0).item() == doctest::Approx(4.0));
  auto x = test::random_tensor({3, 4}, 11, 4.0, 9.0);
  const double err = test::gradcheck([](const std::vector<d::Tensor>& in) { return norm_penalty(in[0], 10.0); }, {x});
  CHECK(err < 1e-6);
}

TEST_CASE("total loss composes its components") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto b = random_batch(seed + 5000);
    if (!has_pairs_within(b.text_class)) continue;
    // Scale some rows past the norm threshold.
    for (double& v : b.text[0]) v *= 12.0;
    LossConfig c;
    c.gamma = 0.7;
    c.lambda = 0.3;
    const auto got = total_loss(to_tensor(b.text), b.text_class, to_tensor(b.shape), b.shape_class, c);
    const auto ref = oracle::associate(b.text, b.shape);
    const double expected = oracle::association_loss(ref.tst, ref.shape_visit, b.text_class, 0.3) +
                            oracle::association_loss(ref.sts, ref.text_visit, b.shape_class, 0.3) +
                            0.7 * (oracle::ml_within(b.text, b.text_class, 0.5) +
                                   oracle::ml_cross(b.text, b.text_class, b.shape, b.shape_class, 0.5)) +
                            oracle::norm_penalty(b.text, 10.0) + oracle::norm_penalty(b.shape, 10.0);
    CHECK(std::abs(got.total_value - expected) < 1e-10 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("ablation switches") {
  const auto b = random_batch(77);
  LossConfig c = LossConfig::for_mode("lba_only", LossConfig{});
  CHECK(c.gamma == 0.0);
  const auto got = total_loss(to_tensor(b.text), b.text_class, to_tensor(b.shape), b.shape_class, c);
  CHECK(got.tt == 0.0);
  CHECK(got.ts == 0.0);
  CHECK(LossConfig::for_mode("ml_only", LossConfig{}).tst_weight == 0.0);
  CHECK(LossConfig::for_mode("lba_tst", LossConfig{}).sts_weight == 0.0);
  CHECK_THROWS_AS(LossConfig::for_mode("bogus", LossConfig{}), ConfigError);

  LossConfig none;
  none.tst_weight = none.sts_weight = none.gamma = none.norm_weight = 0.0;
  CHECK(total_loss(to_tensor(b.text), b.text_class, to_tensor(b.shape), b.shape_class, none).total_value == 0.0);
}

TEST_CASE("total loss is invariant to batch order") {
  std::uint64_t seed = 4242;
  while (!has_pairs_within(random_batch(seed).text_class)) ++seed;
  const auto b = random_batch(seed);
  LossConfig c;
  const double base = total_loss(to_tensor(b.text), b.text_class, to_tensor(b.shape), b.shape_class, c).total_value;
  auto r = b;
  std::reverse(r.text.begin(), r.text.end());
  std::reverse(r.text_class.begin(), r.text_class.end());
  std::reverse(r.shape.begin(), r.shape.end());
  std::reverse(r.shape_class.begin(), r.shape_class.end());
  CHECK(std::abs(total_loss(to_tensor(r.text), r.text_class, to_tensor(r.shape), r.shape_class, c).total_value - base) <
        1e-9);
}
