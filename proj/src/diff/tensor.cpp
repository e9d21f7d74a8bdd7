// SPDX-License-Identifier: Apache-2.0
#include "t2s/diff/tensor.hpp"

#include <unordered_map>
#include <unordered_set>

#include "t2s/diff/ops.hpp"
#include "t2s/error.hpp"

namespace t2s::diff {
namespace {

thread_local bool g_grad_enabled = true;

// Post-order over the requires-grad subgraph rooted at `root`.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].node();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

// Runs the reverse sweep. `needed` restricts propagation; leaves are handed to `on_leaf`.
template <typename LeafFn>
void reverse_sweep(const Tensor& output, const Tensor& grad_output, bool create_graph,
                   const std::unordered_set<Node*>* targets,
                   std::unordered_map<Node*, Tensor>& grads, LeafFn on_leaf) {
  if (!output.requires_grad()) return;
  const auto order = topo_order(output.node());

  std::unordered_set<Node*> needed;
  for (Node* n : order) {
    bool keep = targets == nullptr || targets->count(n) > 0;
    for (const auto& in : n->inputs) keep = keep || needed.count(in.node()) > 0;
    if (keep) needed.insert(n);
  }

  Tensor seed = grad_output.defined() ? grad_output : Tensor::ones(output.shape());
  if (seed.shape() != output.shape()) {
    throw ShapeError("grad_output shape " + shape_str(seed.shape()) + " != output shape " +
                     shape_str(output.shape()));
  }
  grads[output.node()] = seed;

  GradModeGuard mode(create_graph);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!needed.count(n)) continue;
    auto found = grads.find(n);
    if (found == grads.end()) continue;
    const Tensor g = found->second;
    if (!n->backward) {
      on_leaf(n, g);
      continue;
    }
    const auto input_grads = n->backward(n->inputs, g);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      const Tensor& in = n->inputs[i];
      if (!in.requires_grad() || !needed.count(in.node())) continue;
      const Tensor& gi = input_grads[i];
      if (!gi.defined()) continue;
      if (gi.shape() != in.shape()) {
        throw ShapeError(std::string("backward of ") + n->op + " produced gradient of shape " +
                         shape_str(gi.shape()) + " for input of shape " + shape_str(in.shape()));
      }
      auto slot = grads.find(in.node());
      if (slot == grads.end()) {
        grads.emplace(in.node(), gi);
      } else {
        slot->second = add(slot->second, gi);
      }
    }
    if (targets == nullptr || !targets->count(n)) grads.erase(n);
  }
}

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<Node>()) {
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }
Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), value));
}
Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::int64_t Tensor::size(std::int64_t axis) const {
  const auto r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for " + shape_str(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<std::int64_t>(index.size()) != rank()) {
    throw ShapeError("index rank mismatch for " + shape_str(shape()));
  }
  std::int64_t flat = 0, axis = 0;
  for (auto i : index) flat = flat * node_->shape[static_cast<std::size_t>(axis++)] + i;
  return node_->value.at(static_cast<std::size_t>(flat));
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (node_->backward) throw InvalidArgument("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value); }

Tensor make_op_result(Shape shape, std::vector<double> values, const char* op,
                      std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  out.node_->op = op;
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    out.node_->requires_grad = true;
    out.node_->inputs = std::move(inputs);
    out.node_->backward = std::move(backward);
  }
  return out;
}

bool grad_enabled() { return g_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
  g_grad_enabled = enabled;
}
GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         const Tensor& grad_output, bool create_graph) {
  std::unordered_set<Node*> targets;
  for (const auto& w : wrt) targets.insert(w.node());
  std::unordered_map<Node*, Tensor> grads;
  reverse_sweep(output, grad_output, create_graph, &targets, grads, [](Node*, const Tensor&) {});
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = grads.find(w.node());
    out.push_back(it != grads.end() ? it->second : Tensor::zeros(w.shape()));
  }
  return out;
}

void backward(const Tensor& output) {
  std::unordered_map<Node*, Tensor> grads;
  reverse_sweep(output, Tensor{}, false, nullptr, grads, [](Node* leaf, const Tensor& g) {
    if (leaf->grad.empty()) {
      leaf->grad.assign(g.data().begin(), g.data().end());
    } else {
      for (std::size_t i = 0; i < leaf->grad.size(); ++i) leaf->grad[i] += g.data()[i];
    }
  });
}

}  // namespace t2s::diff
