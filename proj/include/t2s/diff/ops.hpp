// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "t2s/diff/tensor.hpp"

namespace t2s::diff {

/// Leaf that never requires a gradient.
Tensor constant(Shape shape, std::vector<double> values);

// Elementwise binary ops broadcast numpy-style (right-aligned, size-1 dims).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// a / b with the convention x / 0 = 0 (value and gradients).
Tensor safe_div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::int64_t axis, bool keepdim = true);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::int64_t axis, bool keepdim = true);

Tensor broadcast_to(const Tensor& x, const Shape& shape);
/// Reduces a broadcast tensor back to `shape` by summation.
Tensor sum_to(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, Shape shape);

/// 2-D only.
Tensor transpose(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);     // a b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T b

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t length);

/// Rows (axis 0) of x selected by idx; repeats allowed.
Tensor index_rows(const Tensor& x, const std::vector<std::int64_t>& idx);
/// Adjoint of index_rows: out[idx[i]] += g[i], out has `rows` rows.
Tensor scatter_add_rows(const Tensor& g, const std::vector<std::int64_t>& idx, std::int64_t rows);
inline Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& tokens) {
  return index_rows(table, tokens);
}

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
/// [N, d] -> [N, 1] Euclidean row norms; the gradient at a zero row is 0.
Tensor l2_norm_rows(const Tensor& x);

// Volumetric ops on [N, C, D, H, W] tensors with cubic kernels.
struct ConvGeometry {
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t pad = 0;
};
std::int64_t conv_out_size(std::int64_t in, const ConvGeometry& g);

/// w: [C_out, C_in, k, k, k].
Tensor conv3d(const Tensor& x, const Tensor& w, const ConvGeometry& g);
/// Adjoint of conv3d in its input. y: [N, C_out, ...], w: [C_out, C_in, k, k, k];
/// result: [N, C_in, out_spatial...].
Tensor conv3d_transpose(const Tensor& y, const Tensor& w, const ConvGeometry& g,
                        const std::array<std::int64_t, 3>& out_spatial);
/// Adjoint of conv3d in its weight: sum over batch and positions of gy (x) x-patches.
Tensor conv3d_weight_grad(const Tensor& x, const Tensor& gy, const ConvGeometry& g);

/// Non-overlapping average pooling with kernel = stride = k.
Tensor avg_pool3d(const Tensor& x, std::int64_t k);
/// Adjoint of avg_pool3d: spreads each value / k^3 over its block.
Tensor avg_unpool3d(const Tensor& x, std::int64_t k);

}  // namespace t2s::diff
