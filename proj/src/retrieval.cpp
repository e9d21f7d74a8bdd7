// SPDX-License-Identifier: Apache-2.0
#include "t2s/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "t2s/error.hpp"

namespace t2s {

EmbeddingIndex::EmbeddingIndex(std::int64_t d, std::vector<double> v, std::vector<std::int64_t> l)
    : dim(d), vectors(std::move(v)), labels(std::move(l)) {
  if (d <= 0 || static_cast<std::int64_t>(vectors.size()) != d * static_cast<std::int64_t>(labels.size())) {
    throw ShapeError("embedding index: " + std::to_string(vectors.size()) + " values for " +
                     std::to_string(labels.size()) + " rows of width " + std::to_string(d));
  }
  for (double x : vectors) {
    if (!std::isfinite(x)) throw InvalidArgument("embedding index contains non-finite values");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::int64_t> knn(std::span<const double> query, const EmbeddingIndex& index, std::int64_t k,
                              std::int64_t exclude) {
  if (index.size() == 0) throw InvalidArgument("knn on an empty index");
  const std::int64_t available = index.size() - (exclude >= 0 && exclude < index.size() ? 1 : 0);
  if (k < 0 || k > available) {
    throw InvalidArgument("k = " + std::to_string(k) + " exceeds " + std::to_string(available) + " candidates");
  }
  std::vector<std::pair<double, std::int64_t>> scored;
  scored.reserve(static_cast<std::size_t>(index.size()));
  for (std::int64_t i = 0; i < index.size(); ++i) {
    if (i == exclude) continue;
    scored.emplace_back(dot(query, index.row(i)), i);
  }
  const auto better = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);
  std::vector<std::int64_t> out(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) out[i] = scored[i].second;
  return out;
}

namespace {

void check_k(const RankedQuery& q, std::int64_t k) {
  if (k < 1 || static_cast<std::int64_t>(q.ranking.size()) < k) {
    throw InvalidArgument("k = " + std::to_string(k) + " exceeds ranking length " +
                          std::to_string(q.ranking.size()));
  }
}

}  // namespace

double recall_rate(const std::vector<RankedQuery>& queries, const std::vector<std::int64_t>& index_labels,
                   std::int64_t k) {
  if (queries.empty()) return 0.0;
  std::int64_t hits = 0;
  for (const auto& q : queries) {
    check_k(q, k);
    for (std::int64_t r = 0; r < k; ++r) {
      if (index_labels.at(static_cast<std::size_t>(q.ranking[r])) == q.label) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

NdcgResult ndcg(const std::vector<RankedQuery>& queries, const std::vector<std::int64_t>& index_labels,
                std::int64_t k) {
  NdcgResult res;
  double total = 0.0;
  std::int64_t scored = 0;
  for (const auto& q : queries) {
    check_k(q, k);
    std::int64_t relevant = std::count(index_labels.begin(), index_labels.end(), q.label);
    if (q.excluded >= 0 && index_labels.at(static_cast<std::size_t>(q.excluded)) == q.label) --relevant;
    if (relevant <= 0) {
      ++res.skipped;
      continue;
    }
    double dcg = 0.0, ideal = 0.0;
    for (std::int64_t r = 0; r < k; ++r) {
      const double discount = 1.0 / std::log2(static_cast<double>(r) + 2.0);
      if (index_labels.at(static_cast<std::size_t>(q.ranking[r])) == q.label) dcg += discount;
      if (r < relevant) ideal += discount;
    }
    total += dcg / ideal;
    ++scored;
  }
  res.value = scored > 0 ? total / static_cast<double>(scored) : 0.0;
  return res;
}

nlohmann::json evaluate_retrieval(const EmbeddingIndex& queries, const EmbeddingIndex& index,
                                  const std::vector<std::int64_t>& ks, bool exclude_self) {
  if (queries.dim != index.dim) throw ShapeError("query and index dimensions differ");
  if (ks.empty()) throw InvalidArgument("no k values requested");
  if (exclude_self && queries.size() != index.size()) {
    throw InvalidArgument("exclude_self requires queries to be the index itself");
  }
  const std::int64_t kmax = *std::max_element(ks.begin(), ks.end());
  std::vector<RankedQuery> ranked;
  ranked.reserve(static_cast<std::size_t>(queries.size()));
  for (std::int64_t i = 0; i < queries.size(); ++i) {
    const std::int64_t ex = exclude_self ? i : -1;
    ranked.push_back({knn(queries.row(i), index, kmax, ex), queries.labels[static_cast<std::size_t>(i)], ex});
  }
  nlohmann::json out = {{"queries", queries.size()}, {"index_size", index.size()}};
  for (const auto k : ks) {
    const NdcgResult n = ndcg(ranked, index.labels, k);
    out["rr@" + std::to_string(k)] = recall_rate(ranked, index.labels, k);
    out["ndcg@" + std::to_string(k)] = n.value;
    out["ndcg_skipped"] = n.skipped;
  }
  return out;
}

std::vector<double> embedding_arithmetic(const std::vector<ArithmeticTerm>& terms) {
  if (terms.empty()) throw InvalidArgument("empty arithmetic expression");
  std::vector<double> out(terms[0].vector.size(), 0.0);
  for (const auto& t : terms) {
    if (t.vector.size() != out.size()) throw ShapeError("arithmetic terms differ in dimension");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.sign * t.vector[i];
  }
  return out;
}

}  // namespace t2s
