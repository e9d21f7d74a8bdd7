// SPDX-License-Identifier: Apache-2.0
// Reference implementations written with plain loops, independent of the
// library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace t2s::oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix products(const Matrix& a, const Matrix& b) {
  Matrix out(a.size(), std::vector<double>(b.size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      for (std::size_t d = 0; d < a[i].size(); ++d) out[i][j] += a[i][d] * b[j][d];
  return out;
}

inline Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (auto& row : out) {
    double z = 0.0;
    for (double& v : row) z += (v = std::exp(v));
    for (double& v : row) v /= z;
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m[0].size(), std::vector<double>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) out[j][i] = m[i][j];
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

/// Round-trip cross-entropy against the uniform same-class target plus
/// lambda times the visit cross-entropy against uniform.
inline double association_loss(const Matrix& round_trip, const std::vector<double>& visit,
                               const std::vector<std::int64_t>& classes, double lambda) {
  const std::size_t k = classes.size();
  double lr = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double same = 0.0;
    for (std::size_t j = 0; j < k; ++j) same += classes[j] == classes[i];
    for (std::size_t j = 0; j < k; ++j) {
      if (classes[j] == classes[i]) lr -= std::log(round_trip[i][j]) / same;
    }
  }
  lr /= static_cast<double>(k);
  double lh = 0.0;
  for (double v : visit) lh -= std::log(v);
  lh /= static_cast<double>(visit.size());
  return lr + lambda * lh;
}

struct Association {
  Matrix tst, sts;
  std::vector<double> shape_visit, text_visit;
};

inline Association associate(const Matrix& text, const Matrix& shape) {
  const Matrix ts = softmax_rows(products(text, shape));
  const Matrix st = softmax_rows(products(shape, text));
  Association a{matmul(ts, st), matmul(st, ts), std::vector<double>(shape.size(), 0.0),
                std::vector<double>(text.size(), 0.0)};
  for (std::size_t i = 0; i < text.size(); ++i)
    for (std::size_t j = 0; j < shape.size(); ++j) {
      a.shape_visit[j] += ts[i][j] / static_cast<double>(text.size());
      a.text_visit[i] += st[j][i] / static_cast<double>(shape.size());
    }
  return a;
}

inline double lifted_term(double v_left, double v_right, double sim) {
  if (v_left + v_right == 0.0) return 0.0;
  const double h = std::max(0.0, std::log(v_left + v_right) - sim);
  return h * h;
}

inline double ml_within(const Matrix& e, const std::vector<std::int64_t>& c, double alpha) {
  const std::size_t n = e.size();
  const Matrix s = products(e, e);
  std::vector<double> v(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      if (c[k] != c[i]) v[i] += std::exp(alpha + s[i][k]);
  double total = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (c[i] == c[j]) {
        total += lifted_term(v[i], v[j], s[i][j]);
        pairs += 1.0;
      }
  return total / (2.0 * pairs);
}

inline double ml_cross(const Matrix& t, const std::vector<std::int64_t>& tc, const Matrix& s,
                       const std::vector<std::int64_t>& sc, double alpha) {
  const Matrix m = products(t, s);
  std::vector<double> vt(t.size(), 0.0), vs(s.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (tc[i] != sc[j]) {
        vt[i] += std::exp(alpha + m[i][j]);
        vs[j] += std::exp(alpha + m[i][j]);
      }
  double total = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (tc[i] == sc[j]) {
        total += lifted_term(vt[i], vs[j], m[i][j]);
        pairs += 1.0;
      }
  return total / (2.0 * pairs);
}

inline double norm_penalty(const Matrix& e, double threshold) {
  double total = 0.0;
  for (const auto& row : e) {
    double sq = 0.0;
    for (double v : row) sq += v * v;
    const double excess = std::max(0.0, std::sqrt(sq) - threshold);
    total += excess * excess;
  }
  return total;
}

/// min c.x subject to A x = b, x >= 0, by a two-phase tableau simplex with
/// Bland's rule. Rows with b < 0 are negated first.
inline double linear_program_min(const std::vector<double>& c, Matrix a, std::vector<double> b) {
  const std::size_t rows = a.size(), vars = c.size();
  for (std::size_t r = 0; r < rows; ++r) {
    if (b[r] < 0) {
      b[r] = -b[r];
      for (double& v : a[r]) v = -v;
    }
  }
  // Tableau columns: vars, artificials, rhs.
  const std::size_t cols = vars + rows + 1;
  Matrix t(rows + 1, std::vector<double>(cols, 0.0));
  std::vector<std::size_t> basis(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < vars; ++j) t[r][j] = a[r][j];
    t[r][vars + r] = 1.0;
    t[r][cols - 1] = b[r];
    basis[r] = vars + r;
  }
  constexpr double kEps = 1e-12;
  auto pivot = [&](std::size_t pr, std::size_t pc) {
    const double p = t[pr][pc];
    for (double& v : t[pr]) v /= p;
    for (std::size_t r = 0; r <= rows; ++r) {
      if (r == pr || t[r][pc] == 0.0) continue;
      const double f = t[r][pc];
      for (std::size_t j = 0; j < cols; ++j) t[r][j] -= f * t[pr][j];
    }
    basis[pr] = pc;
  };
  auto run = [&](std::size_t allowed) {
    for (;;) {
      std::size_t enter = cols;
      for (std::size_t j = 0; j < allowed; ++j) {
        if (t[rows][j] < -kEps) {
          enter = j;
          break;
        }
      }
      if (enter == cols) return;
      std::size_t leave = rows;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows; ++r) {
        if (t[r][enter] > kEps) {
          const double ratio = t[r][cols - 1] / t[r][enter];
          if (ratio < best - kEps || (ratio <= best + kEps && basis[r] < basis[leave])) {
            best = ratio;
            leave = r;
          }
        }
      }
      if (leave == rows) return;  // unbounded; cannot occur for transport
      pivot(leave, enter);
    }
  };
  // Phase 1: minimize the sum of artificials.
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j)
      if (j < vars || j == cols - 1) t[rows][j] -= t[r][j];
  run(vars + rows);
  // Drive remaining artificials out of the basis where possible.
  for (std::size_t r = 0; r < rows; ++r) {
    if (basis[r] < vars) continue;
    for (std::size_t j = 0; j < vars; ++j) {
      if (std::abs(t[r][j]) > kEps) {
        pivot(r, j);
        break;
      }
    }
  }
  // Phase 2 objective in terms of the current basis.
  std::fill(t[rows].begin(), t[rows].end(), 0.0);
  for (std::size_t j = 0; j < vars; ++j) t[rows][j] = c[j];
  for (std::size_t r = 0; r < rows; ++r) {
    if (basis[r] >= vars) continue;
    const double f = t[rows][basis[r]];
    for (std::size_t j = 0; j < cols; ++j) t[rows][j] -= f * t[r][j];
  }
  run(vars);
  double value = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    if (basis[r] < vars) value += c[basis[r]] * t[r][cols - 1];
  return value;
}

/// Optimal transport cost over all plans between histograms a and b.
inline double transport_cost(const std::vector<double>& a, const std::vector<double>& b, const Matrix& cost) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> c(n * m);
  Matrix eq;
  std::vector<double> rhs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) c[i * m + j] = cost[i][j];
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n * m, 0.0);
    for (std::size_t j = 0; j < m; ++j) row[i * m + j] = 1.0;
    eq.push_back(row);
    rhs.push_back(a[i]);
  }
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> row(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) row[i * m + j] = 1.0;
    eq.push_back(row);
    rhs.push_back(b[j]);
  }
  return linear_program_min(c, eq, rhs);
}

/// Full ranking by similarity (descending, ties by id) computed by counting
/// how many items beat each item.
inline std::vector<std::int64_t> brute_ranking(const std::vector<double>& sims, std::int64_t exclude) {
  const auto n = static_cast<std::int64_t>(sims.size());
  std::vector<std::int64_t> ranked(static_cast<std::size_t>(n), -1);
  for (std::int64_t i = 0; i < n; ++i) {
    if (i == exclude) continue;
    std::int64_t place = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == exclude || j == i) continue;
      if (sims[j] > sims[i] || (sims[j] == sims[i] && j < i)) ++place;
    }
    ranked[static_cast<std::size_t>(place)] = i;
  }
  ranked.resize(static_cast<std::size_t>(exclude >= 0 && exclude < n ? n - 1 : n));
  return ranked;
}

/// Binary-gain NDCG@k of one ranking; negative when no relevant item exists.
inline double ndcg_one(const std::vector<std::int64_t>& ranking, const std::vector<std::int64_t>& labels,
                       std::int64_t label, std::int64_t k) {
  double relevant = 0.0;
  for (auto id : ranking) relevant += labels[static_cast<std::size_t>(id)] == label;
  if (relevant == 0.0) return -1.0;
  double dcg = 0.0, ideal = 0.0;
  for (std::int64_t r = 0; r < k && r < static_cast<std::int64_t>(ranking.size()); ++r) {
    if (labels[static_cast<std::size_t>(ranking[static_cast<std::size_t>(r)])] == label) dcg += 1.0 / std::log2(r + 2.0);
  }
  for (std::int64_t r = 0; r < k && r < static_cast<std::int64_t>(relevant); ++r) ideal += 1.0 / std::log2(r + 2.0);
  return dcg / ideal;
}

}  // namespace t2s::oracle
