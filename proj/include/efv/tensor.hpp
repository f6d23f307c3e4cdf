#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "efv/error.hpp"

namespace efv {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

namespace detail {
inline std::uint64_t*& kink_sink() {
  thread_local std::uint64_t* sink = nullptr;
  return sink;
}
inline void record_kink_side(bool positive) {
  if (std::uint64_t* h = kink_sink()) *h = (*h ^ (positive ? 1u : 2u)) * 1099511628211ull;
}
}  // namespace detail

/// While alive, piecewise-linear ops on this thread fold the side of every
/// kink they evaluate into fingerprint(). Two evaluations with equal
/// fingerprints ran through the same linear pieces.
class KinkProbe {
 public:
  KinkProbe() : prev_(detail::kink_sink()) { detail::kink_sink() = &hash_; }
  ~KinkProbe() { detail::kink_sink() = prev_; }
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;
  void reset() { hash_ = 14695981039346656037ull; }
  std::uint64_t fingerprint() const { return hash_; }

 private:
  std::uint64_t hash_ = 14695981039346656037ull;
  std::uint64_t* prev_;
};

/// While alive, ops on this thread produce constants and record nothing.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major array with an optional slot in a reverse-mode record.
/// Copies share the underlying node.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<T> values) {
    if (numel(shape) != values.size()) {
      throw DimensionMismatch("tensor " + shape_str(shape) + " given " +
                              std::to_string(values.size()) + " values");
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape) {
    const std::size_t n = numel(shape);
    return constant(std::move(shape), std::vector<T>(n, T(0)));
  }

  /// Leaf that accumulates gradients across backward passes.
  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  /// Result of a differentiable op. The record is kept only when grad mode is
  /// on and some parent needs a gradient.
  static Tensor from_op(Shape shape, std::vector<T> values,
                        std::vector<std::shared_ptr<Node<T>>> parents,
                        std::function<void(Node<T>&)> backward_fn) {
    Tensor t = constant(std::move(shape), std::move(values));
    bool needs = false;
    if (grad_enabled()) {
      for (const auto& p : parents) needs = needs || (p && p->requires_grad);
    }
    if (needs) {
      t.node_->requires_grad = true;
      t.node_->parents = std::move(parents);
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> values() const { return node_->value; }
  /// In-place access for optimizers and initializers; never call on a tensor
  /// that is part of a live record.
  std::span<T> mutable_values() { return node_->value; }
  T item() const {
    if (size() != 1) throw DimensionMismatch("item() on " + shape_str(shape()));
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }

  /// Empty until a backward pass reaches this tensor.
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Reverse sweep from a scalar root.
  void backward() const {
    if (size() != 1) throw DimensionMismatch("backward() needs a scalar root, got " + shape_str(shape()));
    if (!node_->requires_grad) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS; records can be thousands of nodes deep.
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && !p->parents.empty() && seen.insert(p).second) {
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

 private:
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}
  std::shared_ptr<Node<T>> node_;
};

/// Accumulate `g` into parent `i` of `n` if that parent wants a gradient.
template <typename T>
inline T* grad_of(Node<T>& n, std::size_t i) {
  Node<T>& p = *n.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

/// Copy of values in a different precision; the result is a plain constant.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  auto v = t.values();
  return Tensor<To>::constant(t.shape(), std::vector<To>(v.begin(), v.end()));
}

}  // namespace efv
