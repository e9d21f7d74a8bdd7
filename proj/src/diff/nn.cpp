// SPDX-License-Identifier: Apache-2.0
#include "t2s/diff/nn.hpp"

#include <cmath>

#include "t2s/error.hpp"

namespace t2s::diff {

Tensor ParamStore::insert(std::vector<NamedTensor>& into, const std::string& name, Tensor t) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
  index_[name] = {&into == &params_, into.size()};
  into.push_back({name, t});
  return t;
}

Tensor ParamStore::add_uniform(const std::string& name, const Shape& shape, double bound, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  Tensor t(shape, std::move(v));
  t.set_requires_grad(true);
  return insert(params_, name, t);
}

Tensor ParamStore::add_constant(const std::string& name, const Shape& shape, double value) {
  Tensor t = Tensor::full(shape, value);
  t.set_requires_grad(true);
  return insert(params_, name, t);
}

Tensor ParamStore::add_buffer(const std::string& name, const Shape& shape, double value) {
  return insert(buffers_, name, Tensor::full(shape, value));
}

std::vector<Tensor> ParamStore::param_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

Tensor ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second.first ? params_[it->second.second].tensor : buffers_[it->second.second].tensor;
}

std::int64_t ParamStore::num_parameters() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

namespace {
double fan_bound(std::int64_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }
}  // namespace

Linear::Linear(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng)
    : weight(store.add_uniform(name + ".weight", {in, out}, fan_bound(in), rng)),
      bias(store.add_constant(name + ".bias", {1, out}, 0.0)) {}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

Conv3d::Conv3d(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
               ConvGeometry g, Rng& rng)
    : weight(store.add_uniform(name + ".weight", {out, in, g.kernel, g.kernel, g.kernel},
                               fan_bound(in * g.kernel * g.kernel * g.kernel), rng)),
      bias(store.add_constant(name + ".bias", {1, out, 1, 1, 1}, 0.0)),
      geometry(g) {}

Tensor Conv3d::operator()(const Tensor& x) const { return add(conv3d(x, weight, geometry), bias); }

ConvTranspose3d::ConvTranspose3d(ParamStore& store, const std::string& name, std::int64_t in,
                                 std::int64_t out, ConvGeometry g, Rng& rng)
    : weight(store.add_uniform(name + ".weight", {in, out, g.kernel, g.kernel, g.kernel},
                               fan_bound(in * g.kernel * g.kernel * g.kernel), rng)),
      bias(store.add_constant(name + ".bias", {1, out, 1, 1, 1}, 0.0)),
      geometry(g) {}

std::int64_t ConvTranspose3d::out_size(std::int64_t in) const {
  return (in - 1) * geometry.stride - 2 * geometry.pad + geometry.kernel;
}

Tensor ConvTranspose3d::operator()(const Tensor& x) const {
  if (x.rank() != 5) throw ShapeError("ConvTranspose3d expects [N, C, D, H, W], got " + shape_str(x.shape()));
  const std::array<std::int64_t, 3> out{out_size(x.size(2)), out_size(x.size(3)), out_size(x.size(4))};
  return add(conv3d_transpose(x, weight, geometry, out), bias);
}

namespace {

Shape channel_shape(const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 5) {
    throw ShapeError("batch norm expects [N, C] or [N, C, D, H, W], got " + shape_str(x.shape()));
  }
  Shape s(static_cast<std::size_t>(x.rank()), 1);
  s[1] = x.size(1);
  return s;
}

Tensor reduce_mean_except_channel(const Tensor& x) {
  Tensor m = x;
  for (std::int64_t axis = x.rank() - 1; axis >= 0; --axis) {
    if (axis != 1) m = mean(m, axis, true);
  }
  return m;
}

}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& mean_, const Tensor& var, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  const Shape cs = channel_shape(x);
  const Tensor inv_std = div(Tensor::ones(cs), sqrt(add_scalar(reshape(var, cs), eps)));
  return add(mul(mul(sub(x, reshape(mean_, cs)), inv_std), reshape(gamma, cs)), reshape(beta, cs));
}

BatchNorm::BatchNorm(ParamStore& store, const std::string& name, std::int64_t channels)
    : gamma(store.add_constant(name + ".gamma", {channels}, 1.0)),
      beta(store.add_constant(name + ".beta", {channels}, 0.0)),
      running_mean(store.add_buffer(name + ".running_mean", {channels}, 0.0)),
      running_var(store.add_buffer(name + ".running_var", {channels}, 1.0)) {}

Tensor BatchNorm::operator()(const Tensor& x, bool training) const {
  channel_shape(x);
  if (x.size(1) != gamma.numel()) {
    throw ShapeError("batch norm channels " + std::to_string(gamma.numel()) + " vs input " + shape_str(x.shape()));
  }
  if (!training) {
    return batch_norm(x, constant(running_mean.shape(), {running_mean.data().begin(), running_mean.data().end()}),
                      constant(running_var.shape(), {running_var.data().begin(), running_var.data().end()}),
                      gamma, beta, eps);
  }
  const Tensor mu = reduce_mean_except_channel(x);
  const Tensor var = reduce_mean_except_channel(square(sub(x, mu)));
  const double count = static_cast<double>(x.numel() / x.size(1));
  const double unbias = count > 1 ? count / (count - 1) : 1.0;
  auto rm = running_mean;
  auto rv = running_var;
  auto& rmv = rm.mutable_data();
  auto& rvv = rv.mutable_data();
  for (std::size_t c = 0; c < rmv.size(); ++c) {
    rmv[c] = (1 - momentum) * rmv[c] + momentum * mu.data()[c];
    rvv[c] = (1 - momentum) * rvv[c] + momentum * var.data()[c] * unbias;
  }
  return batch_norm(x, mu, var, gamma, beta, eps);
}

Embedding::Embedding(ParamStore& store, const std::string& name, std::int64_t vocab, std::int64_t dim, Rng& rng)
    : table(store.add_uniform(name + ".table", {vocab, dim}, std::sqrt(3.0), rng)) {}

Tensor Embedding::operator()(const std::vector<std::int64_t>& tokens) const {
  return embedding_lookup(table, tokens);
}

GruCell::GruCell(ParamStore& store, const std::string& name, std::int64_t input, std::int64_t hidden_, Rng& rng)
    : hidden(hidden_),
      w_input(store.add_uniform(name + ".w_input", {input, 3 * hidden_}, fan_bound(hidden_), rng)),
      w_hidden(store.add_uniform(name + ".w_hidden", {hidden_, 3 * hidden_}, fan_bound(hidden_), rng)),
      b_input(store.add_constant(name + ".b_input", {1, 3 * hidden_}, 0.0)),
      b_hidden(store.add_constant(name + ".b_hidden", {1, 3 * hidden_}, 0.0)) {}

Tensor GruCell::operator()(const Tensor& h, const Tensor& x) const {
  const Tensor gi = add(matmul(x, w_input), b_input);
  const Tensor gh = add(matmul(h, w_hidden), b_hidden);
  const Tensor r = sigmoid(add(slice(gi, 1, 0, hidden), slice(gh, 1, 0, hidden)));
  const Tensor z = sigmoid(add(slice(gi, 1, hidden, hidden), slice(gh, 1, hidden, hidden)));
  const Tensor n = tanh(add(slice(gi, 1, 2 * hidden, hidden), mul(r, slice(gh, 1, 2 * hidden, hidden))));
  return add(mul(add_scalar(neg(z), 1.0), n), mul(z, h));
}

}  // namespace t2s::diff
