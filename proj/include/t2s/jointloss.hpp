// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "t2s/diff/ops.hpp"

namespace t2s {

using Labels = std::vector<std::int64_t>;

struct LossConfig {
  double lambda = 0.25;  // visit-loss weight inside each association loss
  double gamma = 1.0;    // metric-loss weight
  double alpha = 0.5;    // metric-loss margin
  double norm_threshold = 10.0;
  double norm_weight = 1.0;
  double tst_weight = 1.0;
  double sts_weight = 1.0;

  /// Applies an ablation mode: full, lba_only, ml_only, tst_only or lba_tst.
  static LossConfig for_mode(const std::string& mode, LossConfig base);
};

/// Similarity and walk probabilities for text embeddings T [m, d] and shape
/// embeddings S [n, d].
struct AssociationProbs {
  diff::Tensor similarity;   // M = T S^T, [m, n]
  diff::Tensor text_shape;   // row-softmax(M), [m, n]
  diff::Tensor shape_text;   // row-softmax(M^T), [n, m]
  diff::Tensor tst;          // [m, m]
  diff::Tensor sts;          // [n, n]
  diff::Tensor shape_visit;  // mean over texts of text_shape, [1, n]
  diff::Tensor text_visit;   // mean over shapes of shape_text, [1, m]
};

AssociationProbs association_probs(const diff::Tensor& text, const diff::Tensor& shape);

struct AssociationTerms {
  diff::Tensor round_trip;  // L_R
  diff::Tensor visit;       // L_H
  diff::Tensor total(double lambda) const { return diff::add(round_trip, diff::scale(visit, lambda)); }
};

/// Cross-entropy of each round-trip row against the uniform distribution over
/// same-class items, averaged over rows, and cross-entropy of the visit
/// distribution against uniform.
AssociationTerms round_trip_terms(const diff::Tensor& round_trip, const diff::Tensor& visit,
                                  const Labels& classes);

AssociationTerms lba_tst_terms(const AssociationProbs& probs, const Labels& text_class);
AssociationTerms lba_sts_terms(const AssociationProbs& probs, const Labels& shape_class);
diff::Tensor lba_tst_loss(const AssociationProbs& probs, const Labels& text_class, double lambda);
diff::Tensor lba_sts_loss(const AssociationProbs& probs, const Labels& shape_class, double lambda);

/// Smoothed lifted-structure loss among the rows of one modality.
diff::Tensor ml_loss_within(const diff::Tensor& emb, const Labels& classes, double alpha);
/// Cross-modal variant: positives are (text, shape) pairs of the same class;
/// a text anchor's negatives are other-class shapes and a shape anchor's
/// negatives are other-class texts.
diff::Tensor ml_loss_cross(const diff::Tensor& text, const Labels& text_class, const diff::Tensor& shape,
                           const Labels& shape_class, double alpha);

/// Sum over rows of max(0, ||row|| - threshold)^2.
diff::Tensor norm_penalty(const diff::Tensor& emb, double threshold);

struct LossBreakdown {
  diff::Tensor total;
  double r_tst = 0, h_tst = 0, r_sts = 0, h_sts = 0, tt = 0, ts = 0, norm = 0, total_value = 0;
};

LossBreakdown total_loss(const diff::Tensor& text, const Labels& text_class, const diff::Tensor& shape,
                         const Labels& shape_class, const LossConfig& config);

void write_loss_csv_header(std::ostream& os);
void write_loss_csv_row(std::ostream& os, std::int64_t step, const LossBreakdown& b);

}  // namespace t2s
