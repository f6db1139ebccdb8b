/* Copyright 2026 The JDND Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Minimal reverse-mode differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Ops create a node whose backward
// closure pushes the incoming gradient to the parents that require it. Nodes
// whose parents are all constant carry no closure, so inference builds no
// graph at all.

#ifndef JDND_AUTOGRAD_HPP_
#define JDND_AUTOGRAD_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "jdnd/tensor.hpp"

namespace jdnd {

template <typename Scalar>
struct Node {
  using BackwardFn = std::function<void(const Tensor<Scalar>& grad_out)>;

  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  Tensor<Scalar>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
  void accumulate(const typename Tensor<Scalar>::Array& g) {
    if (!requires_grad) return;
    grad_buffer().array() += g;
  }
};

template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(Index axis) const { return node_->value.dim(axis); }
  Index size() const { return node_->value.size(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  /// Gradient accumulated by the last backward pass; zeros if none reached.
  const Tensor<Scalar>& grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  /// Copy of this value cut off from the graph.
  Var detached() const { return Var(node_->value, false); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Graph recording switch for the current thread.
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds the result node of an op. `backward` receives the output gradient
/// and is only kept when some parent needs a gradient.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> parents,
                        typename Node<Scalar>::BackwardFn backward) {
  Var<Scalar> out(std::move(value), false);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any || !grad_enabled()) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& p : parents) {
    if (p.requires_grad()) node.parents.push_back(p.node());
  }
  node.backward = std::move(backward);
  return out;
}

/// Runs reverse accumulation from a scalar root (seed 1) or a root with an
/// explicit seed gradient.
template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>* seed = nullptr) {
  if (!root.requires_grad()) return;
  if (!seed && root.size() != 1) {
    throw ConfigError("backward() without a seed needs a scalar root");
  }
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Node<Scalar>& r = *root.node();
  if (seed) {
    r.grad_buffer().array() += seed->array();
  } else {
    r.grad_buffer().array() += Scalar(1);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward && node->grad.size() == node->value.size()) {
      node->backward(node->grad);
      node->grad = Tensor<Scalar>();
    }
  }
}

/// Running count of multiply-accumulates performed by the linear-algebra ops
/// (convolutions, linear layers, attention products) on this thread.
inline std::uint64_t& mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

}  // namespace jdnd

#endif  // JDND_AUTOGRAD_HPP_
