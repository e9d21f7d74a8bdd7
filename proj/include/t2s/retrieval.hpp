// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace t2s {

/// Row-major [size, dim] vectors with one instance label per row.
struct EmbeddingIndex {
  std::int64_t dim = 0;
  std::vector<double> vectors;
  std::vector<std::int64_t> labels;

  EmbeddingIndex() = default;
  EmbeddingIndex(std::int64_t dim, std::vector<double> vectors, std::vector<std::int64_t> labels);
  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  std::span<const double> row(std::int64_t i) const {
    return {vectors.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

double dot(std::span<const double> a, std::span<const double> b);

/// Top-k row ids by dot-product similarity, ties broken by ascending id.
/// `exclude` (if >= 0) is removed from the candidates.
std::vector<std::int64_t> knn(std::span<const double> query, const EmbeddingIndex& index, std::int64_t k,
                              std::int64_t exclude = -1);

struct RankedQuery {
  std::vector<std::int64_t> ranking;  // index ids, best first
  std::int64_t label = 0;
  std::int64_t excluded = -1;  // index id removed from the candidates, if any
};

/// Fraction of queries with a same-label item among the first k ranks.
double recall_rate(const std::vector<RankedQuery>& queries, const std::vector<std::int64_t>& index_labels,
                   std::int64_t k);

struct NdcgResult {
  double value = 0.0;  // mean over scored queries
  std::int64_t skipped = 0;
};

/// Binary-gain NDCG@k with log2(rank + 1) discount. Queries whose label has
/// no relevant item in the index are skipped and counted.
NdcgResult ndcg(const std::vector<RankedQuery>& queries, const std::vector<std::int64_t>& index_labels,
                std::int64_t k);

/// Runs every query against the index and scores RR@k and NDCG@k for each k.
nlohmann::json evaluate_retrieval(const EmbeddingIndex& queries, const EmbeddingIndex& index,
                                  const std::vector<std::int64_t>& ks, bool exclude_self);

struct ArithmeticTerm {
  double sign = 1.0;
  std::vector<double> vector;
};

/// Signed sum of embeddings.
std::vector<double> embedding_arithmetic(const std::vector<ArithmeticTerm>& terms);

}  // namespace t2s
