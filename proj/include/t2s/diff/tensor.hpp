// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace t2s::diff {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

/// Maps (op inputs, gradient of the op output) to one gradient per input.
/// Backward rules are written with differentiable ops, so running them with
/// grad mode enabled builds a graph for higher-order derivatives.
using BackwardFn =
    std::function<std::vector<Tensor>(const std::vector<Tensor>& inputs, const Tensor& grad)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<Tensor> inputs;
  BackwardFn backward;
  std::vector<double> grad;  // leaf accumulator, filled by backward()
};

/// Reference-counted handle to a node of the computation graph. Copies alias.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
  std::int64_t size(std::int64_t axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::span<const double> data() const { return node_->value; }
  /// In-place access; only meaningful on leaves (parameters, inputs).
  std::vector<double>& mutable_data() { return node_->value; }
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  /// Accumulated gradient of a leaf (empty before the first backward()).
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Leaf copy of the value, cut from the graph.
  Tensor detach() const;
  const char* op() const { return node_->op; }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  friend Tensor make_op_result(Shape, std::vector<double>, const char*, std::vector<Tensor>,
                               BackwardFn);
  std::shared_ptr<Node> node_;
};

/// Builds an op output. The node records its inputs and backward rule only
/// when grad mode is on and some input requires a gradient.
Tensor make_op_result(Shape shape, std::vector<double> values, const char* op,
                      std::vector<Tensor> inputs, BackwardFn backward);

bool grad_enabled();

/// RAII switch for the thread-local grad mode.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

/// Gradients of `output` w.r.t. each tensor in `wrt` (zeros when unreachable).
/// `grad_output` defaults to ones. With create_graph the returned gradients are
/// themselves differentiable.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         const Tensor& grad_output = {}, bool create_graph = false);

/// Accumulates d(output)/d(leaf) into every reachable leaf's grad().
void backward(const Tensor& output);

}  // namespace t2s::diff
