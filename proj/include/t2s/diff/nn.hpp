// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "t2s/diff/ops.hpp"
#include "t2s/rng.hpp"

namespace t2s::diff {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered registry of a model's trainable parameters and non-trainable buffers.
class ParamStore {
 public:
  /// Registers a parameter initialized uniformly in [-bound, bound].
  Tensor add_uniform(const std::string& name, const Shape& shape, double bound, Rng& rng);
  Tensor add_constant(const std::string& name, const Shape& shape, double value);
  Tensor add_buffer(const std::string& name, const Shape& shape, double value);

  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  std::vector<Tensor> param_tensors() const;

  /// Parameter or buffer by name; throws InvalidArgument when absent.
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::int64_t num_parameters() const;
  void zero_grad();

 private:
  Tensor insert(std::vector<NamedTensor>& into, const std::string& name, Tensor t);
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
  std::map<std::string, std::pair<bool, std::size_t>> index_;
};

/// y = x W + b with W: [in, out].
struct Linear {
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  Tensor weight, bias;
};

struct Conv3d {
  Conv3d() = default;
  Conv3d(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
         ConvGeometry geometry, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::int64_t out_size(std::int64_t in) const { return conv_out_size(in, geometry); }
  Tensor weight, bias;
  ConvGeometry geometry;
};

/// Transposed convolution producing spatial size (in - 1) * stride - 2 * pad + kernel.
struct ConvTranspose3d {
  ConvTranspose3d() = default;
  ConvTranspose3d(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                  ConvGeometry geometry, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::int64_t out_size(std::int64_t in) const;
  Tensor weight, bias;
  ConvGeometry geometry;
};

/// Batch normalization over all axes but 1 for [N, C] or [N, C, D, H, W] inputs.
/// Training mode uses batch statistics and updates the running buffers.
struct BatchNorm {
  BatchNorm() = default;
  BatchNorm(ParamStore& store, const std::string& name, std::int64_t channels);
  Tensor operator()(const Tensor& x, bool training) const;
  Tensor gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Functional batch norm with given statistics broadcast along axis 1.
Tensor batch_norm(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                  const Tensor& beta, double eps);

struct Embedding {
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, std::int64_t vocab, std::int64_t dim, Rng& rng);
  Tensor operator()(const std::vector<std::int64_t>& tokens) const;
  Tensor table;
};

/// Standard GRU update:
///   r = sigmoid(x W_r + b_ir + h U_r + b_hr), z = sigmoid(x W_z + b_iz + h U_z + b_hz),
///   n = tanh(x W_n + b_in + r * (h U_n + b_hn)), h' = (1 - z) * n + z * h.
/// Gate blocks are stored side by side in the order r, z, n.
struct GruCell {
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& name, std::int64_t input, std::int64_t hidden, Rng& rng);
  Tensor operator()(const Tensor& h, const Tensor& x) const;
  std::int64_t hidden = 0;
  Tensor w_input, w_hidden, b_input, b_hidden;
};

}  // namespace t2s::diff
