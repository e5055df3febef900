// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense n-dimensional tensors with tape-based reverse-mode differentiation.
// A Tensor is a value-semantic handle to a graph node; ops (see ops.hpp)
// create new nodes and record backward closures. backward() replays the
// recorded closures in reverse topological order exactly once per node.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "spectracast/errors.hpp"
#include "spectracast/rng.hpp"

namespace spectracast {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline void check_shape_valid(const Shape& s, const char* who) {
  for (auto e : s) {
    if (e == 0) throw DimensionError(std::string(who) + ": zero extent in shape " + shape_str(s));
  }
}

// Global recording switch. When disabled, ops produce constant nodes with no
// parents, which keeps pure evaluation (metrics, finite differences) cheap.
namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

// Finite-value checking at op boundaries. Defaults to on in debug builds,
// off in release; tests flip it explicitly via FiniteCheckGuard.
inline bool& finite_check_flag() {
#ifdef NDEBUG
  thread_local bool enabled = false;
#else
  thread_local bool enabled = true;
#endif
  return enabled;
}

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

inline bool grad_mode_enabled() { return detail::grad_mode_flag(); }
inline void set_grad_mode(bool on) { detail::grad_mode_flag() = on; }

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode_enabled()) { set_grad_mode(false); }
  ~NoGradGuard() { set_grad_mode(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool finite_checks_enabled() { return detail::finite_check_flag(); }
inline void set_finite_checks(bool on) { detail::finite_check_flag() = on; }

class FiniteCheckGuard {
 public:
  explicit FiniteCheckGuard(bool on = true) : prev_(finite_checks_enabled()) {
    set_finite_checks(on);
  }
  ~FiniteCheckGuard() { set_finite_checks(prev_); }
  FiniteCheckGuard(const FiniteCheckGuard&) = delete;
  FiniteCheckGuard& operator=(const FiniteCheckGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily, same extent as value
  bool requires_grad = false;
  std::uint64_t id = next_node_id();
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }

  void accumulate_grad(std::span<const T> g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
};

}  // namespace detail

template <class T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor scalar must be float or double");

 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

  static Tensor full(Shape shape, T v) {
    check_shape_valid(shape, "tensor");
    auto node = std::make_shared<detail::Node<T>>();
    node->value.assign(shape_numel(shape), v);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
  }

  static Tensor from_data(Shape shape, std::vector<T> data) {
    check_shape_valid(shape, "tensor");
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v) { return full({1}, v); }

  // Truncated-normal initialization (the projection-weight default).
  static Tensor randn_trunc(Shape shape, Rng& rng, double stddev) {
    check_shape_valid(shape, "tensor");
    std::vector<T> data(shape_numel(shape));
    for (auto& x : data) x = static_cast<T>(rng.truncated_normal(stddev));
    return from_data(std::move(shape), std::move(data));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Mutating leaf values is legal only between graph constructions
  // (optimizer steps, finite-difference probes).
  std::span<T> mutable_data() { return node_->value; }

  T item() const {
    if (size() != 1) throw ContractError("item: tensor has " + std::to_string(size()) + " elements");
    return node_->value[0];
  }

  T at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != rank()) throw DimensionError("at: rank mismatch");
    std::size_t flat = 0;
    std::size_t d = 0;
    for (auto i : idx) {
      if (i >= node_->shape[d]) throw DimensionError("at: index out of bounds");
      flat = flat * node_->shape[d] + i;
      ++d;
    }
    return node_->value[flat];
  }

  bool requires_grad() const { return node_->requires_grad; }

  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return defined() && !node_->grad.empty(); }

  std::span<const T> grad() const {
    if (!has_grad()) throw ContractError("grad: no gradient recorded; run backward() first");
    return node_->grad;
  }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), T(0));
  }

  // Deep copy of values; the copy is a fresh leaf.
  Tensor clone() const {
    auto t = from_data(node_->shape, node_->value);
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  // Precision conversion (used at serialization boundaries).
  template <class U>
  Tensor<U> cast() const {
    std::vector<U> data(node_->value.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<U>(node_->value[i]);
    auto t = Tensor<U>::from_data(node_->shape, std::move(data));
    t.set_requires_grad(node_->requires_grad);
    return t;
  }

  NodePtr node() const { return node_; }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

// Builds an op output node. `backward_fn` receives the output node (whose
// grad is fully accumulated by the time it runs) and is responsible for
// accumulating into each parent's grad. Recording is skipped entirely when
// grad mode is off or no parent requires a gradient.
template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::initializer_list<Tensor<T>> parents,
                  std::function<void(detail::Node<T>&)> backward_fn,
                  const char* op_name) {
  if (shape_numel(shape) != value.size()) {
    throw DimensionError(std::string(op_name) + ": internal shape/value mismatch");
  }
  if (finite_checks_enabled()) {
    for (const T v : value) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string(op_name) + ": non-finite value in result");
      }
    }
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_mode_enabled()) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.node()->requires_grad;
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(node));
}

// Reverse-mode sweep from a scalar loss. Nodes are visited in reverse
// topological order (creation ids are monotone along every edge, so sorting
// by id descending is exact); each backward closure runs exactly once.
// Interior buffers are released as soon as they have been consumed: a node's
// grad after its closure ran, and its value too (children, which are the
// only readers of that value, were all processed earlier in the sweep). A
// second backward through the same graph is not supported.
template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a defined scalar tensor");
  }
  auto root = loss.node();
  if (!root->requires_grad) return;

  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->id > b->id; });

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto* n : order) {
    const bool ran = n->backward_fn && !n->grad.empty();
    if (ran) n->backward_fn(*n);
    if (!n->parents.empty()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
      if (ran) {
        n->value.clear();
        n->value.shrink_to_fit();
        n->backward_fn = nullptr;
      }
    }
  }
}

}  // namespace spectracast
