#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "semsr/tensor.hpp"

namespace semsr {

/// Graph recording switch. While a NoGradGuard is alive, operations produce
/// plain values without recording how to differentiate them.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set_enabled(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(const Tensor<Scalar>&)> backward;

  Tensor<Scalar>& grad_buffer() {
    if (grad.size() != value.size() || !(grad.shape() == value.shape())) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

/// Shared handle to a graph node. Copies alias the same node, which is how
/// parameters are shared between a model and its optimizer.
template <typename Scalar>
class Var {
 public:
  using NodeType = Node<Scalar>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var parameter(Tensor<Scalar> value) { return Var(std::move(value), true); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& value_mut() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->value.size() > 0; }
  const Tensor<Scalar>& grad() const { return node_->grad_buffer(); }
  Tensor<Scalar>& grad_mut() { return node_->grad_buffer(); }
  void zero_grad() {
    if (has_grad()) node_->grad.array().setZero();
  }

  /// Value copy cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  Scalar item() const {
    if (node_->value.size() != 1) throw ShapeError("item() on non-scalar " + shape().str());
    return node_->value.array()[0];
  }

  NodeType* node() const { return node_.get(); }
  const std::shared_ptr<NodeType>& shared() const { return node_; }

  /// Reverse-mode sweep from this scalar.
  void backward() const;

 private:
  std::shared_ptr<NodeType> node_;
};

/// Records an operation result. `backward` receives the gradient of the
/// result and accumulates into whichever inputs require it.
template <typename Scalar, typename Backward>
Var<Scalar> make_result(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs, Backward&& backward) {
  Var<Scalar> out(std::move(value), false);
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto* node = out.node();
  node->requires_grad = true;
  for (const auto& in : inputs) node->inputs.push_back(in.shared());
  node->backward = std::forward<Backward>(backward);
  return out;
}

template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, const std::vector<Var<Scalar>>& inputs,
                        std::function<void(const Tensor<Scalar>&)> backward) {
  Var<Scalar> out(std::move(value), false);
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto* node = out.node();
  node->requires_grad = true;
  for (const auto& in : inputs) node->inputs.push_back(in.shared());
  node->backward = std::move(backward);
  return out;
}

template <typename Scalar>
void Var<Scalar>::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() needs a scalar, got " + shape().str());
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> seen;
  std::vector<std::pair<NodeType*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      NodeType* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().array() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* n = *it;
    if (n->backward && n->grad.size() > 0) n->backward(n->grad);
  }
}

namespace detail {
template <typename Scalar>
inline Tensor<Scalar>* grad_of(const Var<Scalar>& v) {
  return v.requires_grad() ? &v.node()->grad_buffer() : nullptr;
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return make_result(std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Tensor<Scalar>& g) {
    if (an->requires_grad) an->grad_buffer().array() += g.array();
    if (bn->requires_grad) bn->grad_buffer().array() += g.array();
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape(), a.value().array() - b.value().array());
  return make_result(std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Tensor<Scalar>& g) {
    if (an->requires_grad) an->grad_buffer().array() += g.array();
    if (bn->requires_grad) bn->grad_buffer().array() -= g.array();
  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), a.value().array() * s);
  return make_result(std::move(out), {a}, [an = a.node(), s](const Tensor<Scalar>& g) {
    an->grad_buffer().array() += g.array() * s;
  });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) {
  return a * s;
}

/// Sum of all elements, as a (1,1,1,1) scalar.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, a.value().array().sum());
  return make_result(std::move(out), {a}, [an = a.node()](const Tensor<Scalar>& g) {
    an->grad_buffer().array() += g.array()[0];
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return sum(a) * (Scalar(1) / Scalar(a.value().size()));
}

}  // namespace semsr
