#pragma once

// Define-by-run reverse-mode differentiation. Values that depend on a tape
// leaf are recorded on that tape in creation order; everything else is a
// plain constant that holds no graph and is freed as soon as it goes out of
// scope, so inference over constant weights retains no intermediates.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "txsp/tensor.hpp"

namespace txsp::ad {

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  Tape<T>* tape = nullptr;  // set iff the node requires a gradient
  std::size_t index = 0;
  bool leaf = false;
  bool retain = false;
  const char* op = "";
};

/// Adds `g` into the gradient slot of `n` when `n` takes part in differentiation.
template <typename T>
void accumulate(Node<T>& n, Tensor<T>&& g) {
  if (!n.tape) return;
  if (n.grad.empty()) {
    n.grad = std::move(g);
    return;
  }
  if (n.grad.shape() != g.shape())
    throw ShapeError(std::string("gradient shape ") + g.shape().str() + " does not match " +
                     n.grad.shape().str() + " at op '" + n.op + "'");
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

}  // namespace detail

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->tape != nullptr; }
  Tape<T>* tape() const { return node_ ? node_->tape : nullptr; }

  /// Gradient after Tape::backward. Empty if nothing flowed into this value.
  const Tensor<T>& grad() const { return node_->grad; }
  /// Keep the gradient of this intermediate after backward (leaves keep theirs).
  void retain_grad() const { node_->retain = true; }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<detail::Node<T>>();
  n->value = std::move(value);
  n->op = "constant";
  return Var<T>(std::move(n));
}

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A differentiable input (parameter or image).
  Var<T> leaf(Tensor<T> value) {
    check_live("leaf");
    auto n = std::make_shared<detail::Node<T>>();
    n->value = std::move(value);
    n->leaf = true;
    n->op = "leaf";
    append(n);
    return Var<T>(std::move(n));
  }

  /// Appends an op result. Used by the op implementations.
  void append(const std::shared_ptr<detail::Node<T>>& n) {
    check_live(n->op);
    n->tape = this;
    n->index = nodes_.size();
    nodes_.push_back(n);
  }

  /// Propagates `seed` from `out` back to every node, in reverse record order.
  /// A tape can be run backward once.
  void backward(const Var<T>& out, const Tensor<T>& seed) {
    check_live("backward");
    if (out.tape() != this) throw std::invalid_argument("backward: output is not on this tape");
    if (seed.shape() != out.shape())
      throw ShapeError("backward: seed " + seed.shape().str() + " does not match output " +
                       out.shape().str());
    consumed_ = true;
    out.node()->grad = seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      detail::Node<T>& n = **it;
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(n);
      if (!n.leaf && !n.retain) n.grad = Tensor<T>();
    }
  }

  /// Seeds with ones; typical for scalar losses.
  void backward(const Var<T>& out) { backward(out, Tensor<T>(out.shape(), T(1))); }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t op_count() const noexcept {
    std::size_t k = 0;
    for (const auto& n : nodes_) k += n->leaf ? 0 : 1;
    return k;
  }
  bool consumed() const noexcept { return consumed_; }

 private:
  void check_live(const std::string& what) const {
    if (consumed_) throw StaleTapeError("tape already ran backward; cannot " + what);
  }

  std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
  bool consumed_ = false;
};

namespace detail {

/// Builds the result node of an op. The node joins the tape of any input that
/// requires a gradient; with no such input it is a constant and `fn` is dropped.
template <typename T>
Var<T> record(const char* op, Tensor<T> value, std::vector<Var<T>> inputs,
              std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  Tape<T>* tape = nullptr;
  for (const auto& in : inputs) {
    if (!in.requires_grad()) continue;
    if (tape && tape != in.tape())
      throw std::invalid_argument(std::string(op) + ": inputs recorded on different tapes");
    tape = in.tape();
  }
  if (!tape) return Var<T>(std::move(n));
  n->inputs.reserve(inputs.size());
  for (auto& in : inputs) n->inputs.push_back(in.node());
  n->backward = std::move(fn);
  tape->append(n);
  return Var<T>(std::move(n));
}

}  // namespace detail
}  // namespace txsp::ad
