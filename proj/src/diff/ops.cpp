// SPDX-License-Identifier: Apache-2.0
#include "t2s/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "t2s/error.hpp"

namespace t2s::diff {
namespace {

using Values = std::vector<double>;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) shape_mismatch(op, a, b);
    out[i] = std::max(da, db);
  }
  return out;
}

std::size_t norm_axis(std::int64_t axis, std::size_t rank, const Shape& shape) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for " + shape_str(shape));
  return static_cast<std::size_t>(axis);
}

bool needs(const std::vector<Tensor>& inputs, std::size_t i) {
  return inputs[i].requires_grad();
}

template <typename F>
Values map_unary(const Tensor& x, F f) {
  Values out(x.data().size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return out;
}

template <typename F>
Values map_binary(const Tensor& a, const Tensor& b, F f) {
  Values out(a.data().size());
  const auto pa = a.data();
  const auto pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[i]);
  return out;
}

// Aligns both operands on a common broadcast shape.
std::pair<Tensor, Tensor> align(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {a, b};
  const Shape s = broadcast_shape(op, a.shape(), b.shape());
  return {broadcast_to(a, s), broadcast_to(b, s)};
}

// Odometer over `shape`, yielding the flat offset under per-axis `strides`.
template <typename F>
void for_each_offset(const Shape& shape, const std::vector<std::int64_t>& strides, F f) {
  const std::size_t r = shape.size();
  const std::int64_t n = shape_numel(shape);
  if (n == 0) return;
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t off = 0;
  for (std::int64_t flat = 0; flat < n; ++flat) {
    f(flat, off);
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < shape[d]) {
        off += strides[d];
        break;
      }
      off -= strides[d] * (shape[d] - 1);
      idx[d] = 0;
    }
  }
}

// Strides of `src` viewed inside `dst` (0 along broadcast axes).
std::vector<std::int64_t> broadcast_strides(const Shape& src, const Shape& dst) {
  const std::size_t r = dst.size();
  std::vector<std::int64_t> strides(r, 0);
  std::int64_t s = 1;
  for (std::size_t i = src.size(); i-- > 0;) {
    const std::size_t d = i + (r - src.size());
    strides[d] = src[i] == 1 ? 0 : s;
    s *= src[i];
  }
  return strides;
}

void check_5d(const char* op, const Tensor& x) {
  if (x.rank() != 5) throw ShapeError(std::string(op) + " expects [N, C, D, H, W], got " + shape_str(x.shape()));
}

struct Vol {
  std::int64_t n, c, d, h, w;
  explicit Vol(const Shape& s) : n(s[0]), c(s[1]), d(s[2]), h(s[3]), w(s[4]) {}
  std::int64_t spatial() const { return d * h * w; }
};

}  // namespace

Tensor constant(Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values));
}

// -- elementwise binary ------------------------------------------------------

Tensor add(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align("add", a0, b0);
  return make_op_result(a.shape(), map_binary(a, b, [](double x, double y) { return x + y; }),
                        "add", {a, b},
                        [](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {g, g};
                        });
}

Tensor sub(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align("sub", a0, b0);
  return make_op_result(a.shape(), map_binary(a, b, [](double x, double y) { return x - y; }),
                        "sub", {a, b},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {g, needs(in, 1) ? neg(g) : Tensor{}};
                        });
}

Tensor mul(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align("mul", a0, b0);
  return make_op_result(a.shape(), map_binary(a, b, [](double x, double y) { return x * y; }),
                        "mul", {a, b},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {needs(in, 0) ? mul(g, in[1]) : Tensor{},
                                  needs(in, 1) ? mul(g, in[0]) : Tensor{}};
                        });
}

Tensor div(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align("div", a0, b0);
  return make_op_result(a.shape(), map_binary(a, b, [](double x, double y) { return x / y; }),
                        "div", {a, b},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {needs(in, 0) ? div(g, in[1]) : Tensor{},
                                  needs(in, 1) ? neg(div(mul(g, in[0]), square(in[1]))) : Tensor{}};
                        });
}

Tensor safe_div(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align("safe_div", a0, b0);
  return make_op_result(
      a.shape(), map_binary(a, b, [](double x, double y) { return y == 0.0 ? 0.0 : x / y; }),
      "safe_div", {a, b}, [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
        return {needs(in, 0) ? safe_div(g, in[1]) : Tensor{},
                needs(in, 1) ? neg(safe_div(mul(g, in[0]), square(in[1]))) : Tensor{}};
      });
}

// -- scalar and unary ----------------------------------------------------------

Tensor scale(const Tensor& x, double c) {
  return make_op_result(x.shape(), map_unary(x, [c](double v) { return c * v; }), "scale", {x},
                        [c](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {scale(g, c)};
                        });
}

Tensor add_scalar(const Tensor& x, double c) {
  return make_op_result(x.shape(), map_unary(x, [c](double v) { return v + c; }), "add_scalar",
                        {x}, [](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {g};
                        });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

namespace {

Tensor masked_unary(const Tensor& x, const char* op, double negative_slope) {
  auto mask = std::make_shared<Values>(map_unary(
      x, [negative_slope](double v) { return v > 0.0 ? 1.0 : negative_slope; }));
  Values out(mask->size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * (*mask)[i];
  const Shape shape = x.shape();
  return make_op_result(shape, std::move(out), op, {x},
                        [mask, shape](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {mul(g, constant(shape, *mask))};
                        });
}

}  // namespace

Tensor relu(const Tensor& x) { return masked_unary(x, "relu", 0.0); }
Tensor leaky_relu(const Tensor& x, double slope) { return masked_unary(x, "leaky_relu", slope); }

Tensor sigmoid(const Tensor& x) {
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return make_op_result(x.shape(), map_unary(x, f), "sigmoid", {x},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          const Tensor s = sigmoid(in[0]);
                          return {mul(g, mul(s, add_scalar(neg(s), 1.0)))};
                        });
}

Tensor tanh(const Tensor& x) {
  return make_op_result(x.shape(), map_unary(x, [](double v) { return std::tanh(v); }), "tanh",
                        {x}, [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          const Tensor t = tanh(in[0]);
                          return {mul(g, add_scalar(neg(square(t)), 1.0))};
                        });
}

Tensor exp(const Tensor& x) {
  return make_op_result(x.shape(), map_unary(x, [](double v) { return std::exp(v); }), "exp", {x},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {mul(g, exp(in[0]))};
                        });
}

Tensor log(const Tensor& x) {
  return make_op_result(x.shape(), map_unary(x, [](double v) { return std::log(v); }), "log", {x},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {div(g, in[0])};
                        });
}

Tensor sqrt(const Tensor& x) {
  return make_op_result(x.shape(), map_unary(x, [](double v) { return std::sqrt(v); }), "sqrt",
                        {x}, [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {safe_div(g, scale(sqrt(in[0]), 2.0))};
                        });
}

Tensor square(const Tensor& x) {
  return make_op_result(x.shape(), map_unary(x, [](double v) { return v * v; }), "square", {x},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {mul(g, scale(in[0], 2.0))};
                        });
}

// -- shape ops -----------------------------------------------------------------

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (x.shape().size() > shape.size()) shape_mismatch("broadcast_to", x.shape(), shape);
  for (std::size_t i = 0; i < x.shape().size(); ++i) {
    const auto d = x.shape()[i];
    const auto t = shape[i + (shape.size() - x.shape().size())];
    if (d != t && d != 1) shape_mismatch("broadcast_to", x.shape(), shape);
  }
  Values out(static_cast<std::size_t>(shape_numel(shape)));
  const auto in = x.data();
  for_each_offset(shape, broadcast_strides(x.shape(), shape),
                  [&](std::int64_t flat, std::int64_t off) { out[flat] = in[off]; });
  const Shape src = x.shape();
  return make_op_result(shape, std::move(out), "broadcast_to", {x},
                        [src](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {sum_to(g, src)};
                        });
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (shape.size() > x.shape().size()) shape_mismatch("sum_to", x.shape(), shape);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const auto d = shape[i];
    const auto s = x.shape()[i + (x.shape().size() - shape.size())];
    if (d != s && d != 1) shape_mismatch("sum_to", x.shape(), shape);
  }
  Values out(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  const auto in = x.data();
  for_each_offset(x.shape(), broadcast_strides(shape, x.shape()),
                  [&](std::int64_t flat, std::int64_t off) { out[off] += in[flat]; });
  const Shape src = x.shape();
  return make_op_result(shape, std::move(out), "sum_to", {x},
                        [src](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {broadcast_to(g, src)};
                        });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  const Shape src = x.shape();
  Values v(x.data().begin(), x.data().end());
  return make_op_result(std::move(shape), std::move(v), "reshape", {x},
                        [src](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {reshape(g, src)};
                        });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const Shape src = x.shape();
  return make_op_result(Shape{}, {s}, "sum", {x},
                        [src](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {broadcast_to(g, src)};
                        });
}

Tensor sum(const Tensor& x, std::int64_t axis0, bool keepdim) {
  const Shape& s = x.shape();
  const std::size_t axis = norm_axis(axis0, s.size(), s);
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::int64_t len = s[axis];
  Values out(static_cast<std::size_t>(outer * inner), 0.0);
  const auto in = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t a = 0; a < len; ++a) {
      const double* src = &in[static_cast<std::size_t>((o * len + a) * inner)];
      double* dst = &out[static_cast<std::size_t>(o * inner)];
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  Shape kept = s;
  kept[axis] = 1;
  Shape result = kept;
  if (!keepdim) result.erase(result.begin() + static_cast<std::ptrdiff_t>(axis));
  const Shape src_shape = s;
  return make_op_result(result, std::move(out), "sum_axis", {x},
                        [src_shape, kept](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {broadcast_to(reshape(g, kept), src_shape)};
                        });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean(const Tensor& x, std::int64_t axis, bool keepdim) {
  const double n = static_cast<double>(x.size(axis));
  return scale(sum(x, axis, keepdim), 1.0 / n);
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose expects 2-D, got " + shape_str(x.shape()));
  const auto r = x.size(0), c = x.size(1);
  Values out(x.data().size());
  const auto in = x.data();
  for (std::int64_t i = 0; i < r; ++i) {
    for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  }
  return make_op_result({c, r}, std::move(out), "transpose", {x},
                        [](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {transpose(g)};
                        });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(0)) shape_mismatch("matmul", a.shape(), b.shape());
  const auto m = a.size(0), k = a.size(1), n = b.size(1);
  Values out(static_cast<std::size_t>(m * n), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t i = 0; i < m; ++i) {
    double* row = &out[i * n];
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::int64_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_op_result({m, n}, std::move(out), "matmul", {a, b},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {needs(in, 0) ? matmul_nt(g, in[1]) : Tensor{},
                                  needs(in, 1) ? matmul_tn(in[0], g) : Tensor{}};
                        });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(1)) shape_mismatch("matmul_nt", a.shape(), b.shape());
  const auto m = a.size(0), k = a.size(1), n = b.size(0);
  Values out(static_cast<std::size_t>(m * n));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out[i * n + j] = s;
    }
  }
  return make_op_result({m, n}, std::move(out), "matmul_nt", {a, b},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {needs(in, 0) ? matmul(g, in[1]) : Tensor{},
                                  needs(in, 1) ? matmul_tn(g, in[0]) : Tensor{}};
                        });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.size(0) != b.size(0)) shape_mismatch("matmul_tn", a.shape(), b.shape());
  const auto k = a.size(0), m = a.size(1), n = b.size(1);
  Values out(static_cast<std::size_t>(m * n), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double av = pa[p * m + i];
      if (av == 0.0) continue;
      double* row = &out[i * n];
      for (std::int64_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_op_result({m, n}, std::move(out), "matmul_tn", {a, b},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {needs(in, 0) ? matmul_nt(in[1], g) : Tensor{},
                                  needs(in, 1) ? matmul(in[0], g) : Tensor{}};
                        });
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis0) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  const std::size_t axis = norm_axis(axis0, s0.size(), s0);
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != s0.size()) shape_mismatch("concat", s0, p.shape());
    for (std::size_t d = 0; d < s0.size(); ++d) {
      if (d != axis && p.shape()[d] != s0[d]) shape_mismatch("concat", s0, p.shape());
    }
    out_shape[axis] += p.shape()[axis];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Values out(static_cast<std::size_t>(shape_numel(out_shape)));
  const std::int64_t out_row = out_shape[axis] * inner;
  std::int64_t col = 0;
  std::vector<std::int64_t> starts, lengths;
  for (const auto& p : parts) {
    const std::int64_t len = p.shape()[axis];
    const auto in = p.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(in.begin() + o * len * inner, len * inner, out.begin() + o * out_row + col * inner);
    }
    starts.push_back(col);
    lengths.push_back(len);
    col += len;
  }
  const auto ax = static_cast<std::int64_t>(axis);
  return make_op_result(out_shape, std::move(out), "concat", parts,
                        [ax, starts, lengths](const std::vector<Tensor>& in, const Tensor& g) {
                          std::vector<Tensor> gs(in.size());
                          for (std::size_t i = 0; i < in.size(); ++i) {
                            if (in[i].requires_grad()) gs[i] = slice(g, ax, starts[i], lengths[i]);
                          }
                          return gs;
                        });
}

Tensor slice(const Tensor& x, std::int64_t axis0, std::int64_t start, std::int64_t length) {
  const Shape& s = x.shape();
  const std::size_t axis = norm_axis(axis0, s.size(), s);
  if (start < 0 || length < 0 || start + length > s[axis]) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") out of range for " + shape_str(s));
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  Values out(static_cast<std::size_t>(shape_numel(out_shape)));
  const auto in = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(in.begin() + (o * s[axis] + start) * inner, length * inner,
                out.begin() + o * length * inner);
  }
  const auto ax = static_cast<std::int64_t>(axis);
  const std::int64_t total = s[axis];
  return make_op_result(out_shape, std::move(out), "slice", {x},
                        [ax, start, length, total](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          std::vector<Tensor> pieces;
                          Shape zs = in[0].shape();
                          if (start > 0) {
                            zs[static_cast<std::size_t>(ax)] = start;
                            pieces.push_back(Tensor::zeros(zs));
                          }
                          pieces.push_back(g);
                          const std::int64_t after = total - start - length;
                          if (after > 0) {
                            zs[static_cast<std::size_t>(ax)] = after;
                            pieces.push_back(Tensor::zeros(zs));
                          }
                          return {pieces.size() == 1 ? g : concat(pieces, ax)};
                        });
}

Tensor index_rows(const Tensor& x, const std::vector<std::int64_t>& idx) {
  if (x.rank() < 1) throw ShapeError("index_rows on a scalar");
  const std::int64_t rows = x.size(0);
  const std::int64_t width = rows == 0 ? 0 : x.numel() / rows;
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<std::int64_t>(idx.size());
  Values out(idx.size() * static_cast<std::size_t>(width));
  const auto in = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= rows) {
      throw InvalidArgument("row index " + std::to_string(idx[i]) + " out of range for " +
                            shape_str(x.shape()));
    }
    std::copy_n(in.begin() + idx[i] * width, width, out.begin() + static_cast<std::int64_t>(i) * width);
  }
  return make_op_result(out_shape, std::move(out), "index_rows", {x},
                        [idx, rows](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {scatter_add_rows(g, idx, rows)};
                        });
}

Tensor scatter_add_rows(const Tensor& g, const std::vector<std::int64_t>& idx, std::int64_t rows) {
  if (g.rank() < 1 || g.size(0) != static_cast<std::int64_t>(idx.size())) {
    throw ShapeError("scatter_add_rows: " + shape_str(g.shape()) + " vs " +
                     std::to_string(idx.size()) + " indices");
  }
  const std::int64_t width = shape_numel(Shape(g.shape().begin() + 1, g.shape().end()));
  Shape out_shape = g.shape();
  out_shape[0] = rows;
  Values out(static_cast<std::size_t>(rows * width), 0.0);
  const auto in = g.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= rows) throw InvalidArgument("scatter row index out of range");
    double* dst = &out[static_cast<std::size_t>(idx[i] * width)];
    const double* src = &in[i * static_cast<std::size_t>(width)];
    for (std::int64_t j = 0; j < width; ++j) dst[j] += src[j];
  }
  return make_op_result(out_shape, std::move(out), "scatter_add_rows", {g},
                        [idx](const std::vector<Tensor>&, const Tensor& gg) -> std::vector<Tensor> {
                          return {index_rows(gg, idx)};
                        });
}

// -- composite row ops -----------------------------------------------------------

namespace {

Tensor row_max_constant(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("row op expects 2-D, got " + shape_str(x.shape()));
  const auto r = x.size(0), c = x.size(1);
  Values m(static_cast<std::size_t>(r), 0.0);
  const auto in = x.data();
  for (std::int64_t i = 0; i < r; ++i) {
    double best = c > 0 ? in[i * c] : 0.0;
    for (std::int64_t j = 1; j < c; ++j) best = std::max(best, in[i * c + j]);
    m[i] = best;
  }
  return constant({r, 1}, std::move(m));
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  const Tensor e = exp(sub(x, row_max_constant(x)));
  return div(e, sum(e, 1, true));
}

Tensor log_softmax_rows(const Tensor& x) {
  const Tensor shifted = sub(x, row_max_constant(x));
  return sub(shifted, log(sum(exp(shifted), 1, true)));
}

Tensor l2_norm_rows(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("l2_norm_rows expects 2-D, got " + shape_str(x.shape()));
  const auto r = x.size(0), c = x.size(1);
  Values out(static_cast<std::size_t>(r));
  const auto in = x.data();
  for (std::int64_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) s += in[i * c + j] * in[i * c + j];
    out[i] = std::sqrt(s);
  }
  return make_op_result({r, 1}, std::move(out), "l2_norm_rows", {x},
                        [](const std::vector<Tensor>& in, const Tensor& g) -> std::vector<Tensor> {
                          return {mul(in[0], safe_div(g, l2_norm_rows(in[0])))};
                        });
}

// -- volumetric ------------------------------------------------------------------

std::int64_t conv_out_size(std::int64_t in, const ConvGeometry& g) {
  return (in + 2 * g.pad - g.kernel) / g.stride + 1;
}

namespace {

std::array<std::int64_t, 3> spatial_of(const Shape& s) { return {s[2], s[3], s[4]}; }

// Input offset linked to (kernel tap, output position), or -1 inside the
// padding. Layout [k^3, out_n], taps in (kz, ky, kx) order.
std::vector<std::int64_t> gather_table(const std::array<std::int64_t, 3>& in_sp,
                                       const std::array<std::int64_t, 3>& out_sp, const ConvGeometry& g) {
  const std::int64_t k = g.kernel;
  std::vector<std::int64_t> table;
  table.reserve(static_cast<std::size_t>(k * k * k * out_sp[0] * out_sp[1] * out_sp[2]));
  for (std::int64_t kz = 0; kz < k; ++kz)
    for (std::int64_t ky = 0; ky < k; ++ky)
      for (std::int64_t kx = 0; kx < k; ++kx)
        for (std::int64_t oz = 0; oz < out_sp[0]; ++oz)
          for (std::int64_t oy = 0; oy < out_sp[1]; ++oy)
            for (std::int64_t ox = 0; ox < out_sp[2]; ++ox) {
              const std::int64_t iz = oz * g.stride - g.pad + kz;
              const std::int64_t iy = oy * g.stride - g.pad + ky;
              const std::int64_t ix = ox * g.stride - g.pad + kx;
              const bool inside = iz >= 0 && iz < in_sp[0] && iy >= 0 && iy < in_sp[1] && ix >= 0 && ix < in_sp[2];
              table.push_back(inside ? (iz * in_sp[1] + iy) * in_sp[2] + ix : -1);
            }
  return table;
}

// Column matrix [channels * k^3, out_n] of one sample.
void im2col(const double* src, std::int64_t channels, std::int64_t in_n, const std::vector<std::int64_t>& table,
            double* cols) {
  const auto per_channel = static_cast<std::int64_t>(table.size());
  for (std::int64_t c = 0; c < channels; ++c) {
    const double* s = src + c * in_n;
    double* d = cols + c * per_channel;
    for (std::int64_t i = 0; i < per_channel; ++i) d[i] = table[i] < 0 ? 0.0 : s[table[i]];
  }
}

void col2im(const double* cols, std::int64_t channels, std::int64_t in_n, const std::vector<std::int64_t>& table,
            double* dst) {
  const auto per_channel = static_cast<std::int64_t>(table.size());
  for (std::int64_t c = 0; c < channels; ++c) {
    double* d = dst + c * in_n;
    const double* s = cols + c * per_channel;
    for (std::int64_t i = 0; i < per_channel; ++i) {
      if (table[i] >= 0) d[table[i]] += s[i];
    }
  }
}

void check_kernel(const char* op, const Tensor& w, const ConvGeometry& g) {
  if (w.rank() != 5 || w.size(2) != g.kernel || w.size(3) != g.kernel || w.size(4) != g.kernel) {
    throw ShapeError(std::string(op) + ": weight " + shape_str(w.shape()) + " does not match kernel " +
                     std::to_string(g.kernel));
  }
  if (g.stride < 1 || g.pad < 0 || g.kernel < 1) throw InvalidArgument("bad conv geometry");
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
  check_5d("conv3d", x);
  check_kernel("conv3d", w, g);
  const Vol in(x.shape());
  if (w.size(1) != in.c) shape_mismatch("conv3d", x.shape(), w.shape());
  const std::int64_t co = w.size(0), k = g.kernel;
  const std::array<std::int64_t, 3> in_sp = spatial_of(x.shape());
  const std::array<std::int64_t, 3> out_sp = {conv_out_size(in.d, g), conv_out_size(in.h, g),
                                              conv_out_size(in.w, g)};
  if (out_sp[0] < 1 || out_sp[1] < 1 || out_sp[2] < 1) throw ShapeError("conv3d output is empty for " + shape_str(x.shape()));
  const std::int64_t in_n = in.spatial(), out_n = out_sp[0] * out_sp[1] * out_sp[2];
  const std::int64_t q_n = in.c * k * k * k;
  const auto table = gather_table(in_sp, out_sp, g);
  Values cols(static_cast<std::size_t>(q_n * out_n));
  Values out(static_cast<std::size_t>(in.n * co * out_n), 0.0);
  const double* pw = w.data().data();
  for (std::int64_t n = 0; n < in.n; ++n) {
    im2col(x.data().data() + n * in.c * in_n, in.c, in_n, table, cols.data());
    for (std::int64_t o = 0; o < co; ++o) {
      double* dst = &out[(n * co + o) * out_n];
      for (std::int64_t q = 0; q < q_n; ++q) {
        const double wv = pw[o * q_n + q];
        if (wv == 0.0) continue;
        const double* row = &cols[q * out_n];
        for (std::int64_t p = 0; p < out_n; ++p) dst[p] += wv * row[p];
      }
    }
  }
  return make_op_result({in.n, co, out_sp[0], out_sp[1], out_sp[2]}, std::move(out), "conv3d", {x, w},
                        [g, in_sp](const std::vector<Tensor>& inputs, const Tensor& gy) -> std::vector<Tensor> {
                          return {needs(inputs, 0) ? conv3d_transpose(gy, inputs[1], g, in_sp) : Tensor{},
                                  needs(inputs, 1) ? conv3d_weight_grad(inputs[0], gy, g) : Tensor{}};
                        });
}

Tensor conv3d_transpose(const Tensor& y, const Tensor& w, const ConvGeometry& g,
                        const std::array<std::int64_t, 3>& out_spatial) {
  check_5d("conv3d_transpose", y);
  check_kernel("conv3d_transpose", w, g);
  const Vol yv(y.shape());
  if (w.size(0) != yv.c) shape_mismatch("conv3d_transpose", y.shape(), w.shape());
  for (int d = 0; d < 3; ++d) {
    if (conv_out_size(out_spatial[d], g) != y.shape()[2 + d]) {
      throw ShapeError("conv3d_transpose: output spatial size inconsistent with input " +
                       shape_str(y.shape()));
    }
  }
  const std::int64_t ci = w.size(1), k = g.kernel;
  const std::array<std::int64_t, 3> y_sp = spatial_of(y.shape());
  const std::int64_t x_n = out_spatial[0] * out_spatial[1] * out_spatial[2];
  const std::int64_t y_n = yv.spatial();
  const std::int64_t q_n = ci * k * k * k;
  const auto table = gather_table(out_spatial, y_sp, g);
  Values cols(static_cast<std::size_t>(q_n * y_n));
  Values out(static_cast<std::size_t>(yv.n * ci * x_n), 0.0);
  const double* pw = w.data().data();
  for (std::int64_t n = 0; n < yv.n; ++n) {
    std::fill(cols.begin(), cols.end(), 0.0);
    const double* src = y.data().data() + n * yv.c * y_n;
    for (std::int64_t o = 0; o < yv.c; ++o) {
      const double* yrow = src + o * y_n;
      for (std::int64_t q = 0; q < q_n; ++q) {
        const double wv = pw[o * q_n + q];
        if (wv == 0.0) continue;
        double* crow = &cols[q * y_n];
        for (std::int64_t p = 0; p < y_n; ++p) crow[p] += wv * yrow[p];
      }
    }
    col2im(cols.data(), ci, x_n, table, &out[n * ci * x_n]);
  }
  return make_op_result({yv.n, ci, out_spatial[0], out_spatial[1], out_spatial[2]}, std::move(out),
                        "conv3d_transpose", {y, w},
                        [g](const std::vector<Tensor>& inputs, const Tensor& gx) -> std::vector<Tensor> {
                          return {needs(inputs, 0) ? conv3d(gx, inputs[1], g) : Tensor{},
                                  needs(inputs, 1) ? conv3d_weight_grad(gx, inputs[0], g) : Tensor{}};
                        });
}

Tensor conv3d_weight_grad(const Tensor& x, const Tensor& gy, const ConvGeometry& g) {
  check_5d("conv3d_weight_grad", x);
  check_5d("conv3d_weight_grad", gy);
  const Vol xv(x.shape()), yv(gy.shape());
  if (xv.n != yv.n) shape_mismatch("conv3d_weight_grad", x.shape(), gy.shape());
  const std::array<std::int64_t, 3> x_sp = spatial_of(x.shape());
  const std::array<std::int64_t, 3> y_sp = spatial_of(gy.shape());
  for (int d = 0; d < 3; ++d) {
    if (conv_out_size(x_sp[d], g) != y_sp[d]) shape_mismatch("conv3d_weight_grad", x.shape(), gy.shape());
  }
  const std::int64_t k = g.kernel, kk = k * k * k;
  const std::int64_t x_n = xv.spatial(), y_n = yv.spatial();
  const std::int64_t q_n = xv.c * kk;
  const auto table = gather_table(x_sp, y_sp, g);
  Values cols(static_cast<std::size_t>(q_n * y_n));
  Values out(static_cast<std::size_t>(yv.c * q_n), 0.0);
  for (std::int64_t n = 0; n < xv.n; ++n) {
    im2col(x.data().data() + n * xv.c * x_n, xv.c, x_n, table, cols.data());
    const double* src = gy.data().data() + n * yv.c * y_n;
    for (std::int64_t o = 0; o < yv.c; ++o) {
      const double* yrow = src + o * y_n;
      for (std::int64_t q = 0; q < q_n; ++q) {
        const double* crow = &cols[q * y_n];
        double acc = 0.0;
        for (std::int64_t p = 0; p < y_n; ++p) acc += yrow[p] * crow[p];
        out[o * q_n + q] += acc;
      }
    }
  }
  return make_op_result({yv.c, xv.c, k, k, k}, std::move(out), "conv3d_weight_grad", {x, gy},
                        [g, x_sp](const std::vector<Tensor>& inputs, const Tensor& gw) -> std::vector<Tensor> {
                          return {needs(inputs, 0) ? conv3d_transpose(inputs[1], gw, g, x_sp) : Tensor{},
                                  needs(inputs, 1) ? conv3d(inputs[0], gw, g) : Tensor{}};
                        });
}

Tensor avg_pool3d(const Tensor& x, std::int64_t k) {
  check_5d("avg_pool3d", x);
  const Vol v(x.shape());
  if (k < 1 || v.d % k || v.h % k || v.w % k) {
    throw ShapeError("avg_pool3d: " + shape_str(x.shape()) + " not divisible by " + std::to_string(k));
  }
  const std::int64_t od = v.d / k, oh = v.h / k, ow = v.w / k;
  Values out(static_cast<std::size_t>(v.n * v.c * od * oh * ow), 0.0);
  const auto in = x.data();
  const double inv = 1.0 / static_cast<double>(k * k * k);
  for (std::int64_t nc = 0; nc < v.n * v.c; ++nc) {
    const double* src = &in[nc * v.spatial()];
    double* dst = &out[nc * od * oh * ow];
    for (std::int64_t z = 0; z < v.d; ++z)
      for (std::int64_t y = 0; y < v.h; ++y)
        for (std::int64_t xx = 0; xx < v.w; ++xx) {
          dst[((z / k) * oh + y / k) * ow + xx / k] += src[(z * v.h + y) * v.w + xx] * inv;
        }
  }
  return make_op_result({v.n, v.c, od, oh, ow}, std::move(out), "avg_pool3d", {x},
                        [k](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {avg_unpool3d(g, k)};
                        });
}

Tensor avg_unpool3d(const Tensor& x, std::int64_t k) {
  check_5d("avg_unpool3d", x);
  const Vol v(x.shape());
  const std::int64_t od = v.d * k, oh = v.h * k, ow = v.w * k;
  Values out(static_cast<std::size_t>(v.n * v.c * od * oh * ow));
  const auto in = x.data();
  const double inv = 1.0 / static_cast<double>(k * k * k);
  for (std::int64_t nc = 0; nc < v.n * v.c; ++nc) {
    const double* src = &in[nc * v.spatial()];
    double* dst = &out[nc * od * oh * ow];
    for (std::int64_t z = 0; z < od; ++z)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          dst[(z * oh + y) * ow + xx] = src[((z / k) * v.h + y / k) * v.w + xx / k] * inv;
        }
  }
  return make_op_result({v.n, v.c, od, oh, ow}, std::move(out), "avg_unpool3d", {x},
                        [k](const std::vector<Tensor>&, const Tensor& g) -> std::vector<Tensor> {
                          return {avg_pool3d(g, k)};
                        });
}

}  // namespace t2s::diff
