#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sep {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Raised when an operation produces NaN/Inf or a numerical contract is
/// violated. Maps to CLI exit code 1.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on shape/dimension mismatches. Maps to CLI exit code 2.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ")";
  return os.str();
}

namespace detail {

inline int& grad_mode_depth() {
  thread_local int depth = 0;
  return depth;
}

inline bool grad_enabled() { return grad_mode_depth() == 0; }

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until first touched, then value.size() entries
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  Index size() const { return static_cast<Index>(value.size()); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }

  // Long op chains (BPTT graphs) would otherwise unwind recursively through
  // shared_ptr destructors and overflow the stack.
  ~TensorNode() {
    std::vector<std::shared_ptr<TensorNode>> pending(
        std::make_move_iterator(parents.begin()),
        std::make_move_iterator(parents.end()));
    parents.clear();
    while (!pending.empty()) {
      std::shared_ptr<TensorNode> n = std::move(pending.back());
      pending.pop_back();
      if (n && n.use_count() == 1) {
        pending.insert(pending.end(),
                       std::make_move_iterator(n->parents.begin()),
                       std::make_move_iterator(n->parents.end()));
        n->parents.clear();
      }
    }
  }
};

}  // namespace detail

/// Disables tape recording for the enclosing scope (inference / evaluation).
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::grad_mode_depth(); }
  ~NoGradGuard() { --detail::grad_mode_depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Dense n-dimensional array of S (row-major, contiguous) with an optional
/// gradient buffer. Copies are shallow handles to shared storage; ops on
/// tensors record a tape so that backward() can later fill input gradients.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return full(std::move(shape), S(0));
  }

  static Tensor full(Shape shape, S v) {
    auto node = std::make_shared<detail::TensorNode<S>>();
    node->value.assign(static_cast<std::size_t>(shape_size(shape)), v);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
  }

  static Tensor scalar(S v) { return full(Shape{}, v); }

  static Tensor from_data(Shape shape, std::vector<S> data) {
    if (shape_size(shape) != static_cast<Index>(data.size()))
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto node = std::make_shared<detail::TensorNode<S>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    return Tensor(std::move(node));
  }

  static Tensor from_span(Shape shape, std::span<const S> data) {
    return from_data(std::move(shape), std::vector<S>(data.begin(), data.end()));
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return checked().shape; }
  int rank() const { return static_cast<int>(checked().shape.size()); }
  Index dim(int axis) const { return checked().shape.at(static_cast<std::size_t>(axis)); }
  Index size() const { return checked().size(); }

  std::span<const S> values() const {
    return {checked().value.data(), checked().value.size()};
  }
  /// Mutable view of the underlying storage (parameter updates, perturbation
  /// tests). Mutating a tensor that participates in a live graph invalidates
  /// that graph's recorded forward values.
  std::span<S> values_mut() { return {checked().value.data(), checked().value.size()}; }

  S item() const {
    if (size() != 1) throw ShapeError("item() requires a scalar tensor, got " + shape_str(shape()));
    return checked().value[0];
  }

  S operator()(Index r, Index c) const {
    const auto& n = checked();
    if (n.shape.size() != 2) throw ShapeError("2-d accessor on rank-" + std::to_string(n.shape.size()) + " tensor");
    return n.value[static_cast<std::size_t>(r * n.shape[1] + c)];
  }

  bool requires_grad() const { return checked().requires_grad; }
  Tensor& set_requires_grad(bool b) {
    checked().requires_grad = b;
    return *this;
  }

  bool has_grad() const { return defined() && !node_->grad.empty(); }
  std::span<const S> grad() const {
    const auto& n = checked();
    if (n.grad.size() != n.value.size())
      throw NumericError("gradient not populated; call backward() first");
    return {n.grad.data(), n.grad.size()};
  }
  std::span<S> grad_mut() {
    auto& n = checked();
    if (n.grad.size() != n.value.size())
      throw NumericError("gradient not populated; call backward() first");
    return {n.grad.data(), n.grad.size()};
  }
  void zero_grad() { checked().grad.assign(checked().value.size(), S(0)); }

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls (a second backward without zero_grad doubles them); interior
  /// gradients are recomputed fresh each call.
  void backward() {
    auto& out = checked();
    if (out.size() != 1) throw ShapeError("backward() requires a scalar output, got " + shape_str(out.shape));
    if (!out.requires_grad) return;

    using Node = detail::TensorNode<S>;
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    struct Frame {
      Node* n;
      std::size_t next = 0;
    };
    std::vector<Frame> stack;
    stack.push_back({&out});
    visited.insert(&out);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.n->parents.size()) {
        Node* p = f.n->parents[f.next++].get();
        if (p->requires_grad && visited.insert(p).second) stack.push_back({p});
      } else {
        topo.push_back(f.n);
        stack.pop_back();
      }
    }
    for (Node* n : topo)
      if (n->backward_fn) n->grad.assign(n->value.size(), S(0));
    out.ensure_grad();
    out.grad[0] += S(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
  }

  const std::shared_ptr<detail::TensorNode<S>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode<S>> node) : node_(std::move(node)) {}

 private:
  detail::TensorNode<S>& checked() const {
    if (!node_) throw ShapeError("use of undefined tensor");
    return *node_;
  }

  std::shared_ptr<detail::TensorNode<S>> node_;
};

/// A parameter handle with its registry name ("blocks.0.rnn1.w_in", ...).
template <typename S>
struct NamedParam {
  std::string name;
  Tensor<S> tensor;
};

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
Eigen::Map<const MatRM<S>> as_matrix(const Tensor<S>& t) {
  if (t.rank() != 2) throw ShapeError("as_matrix requires rank-2, got " + shape_str(t.shape()));
  return {t.values().data(), t.dim(0), t.dim(1)};
}

}  // namespace sep
