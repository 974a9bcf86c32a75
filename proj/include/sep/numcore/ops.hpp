#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sep/numcore/tensor.hpp"

namespace sep {
namespace detail {

template <typename S>
void check_finite(const std::vector<S>& v, const char* op) {
  Eigen::Map<const ArrX<S>> m(v.data(), static_cast<Index>(v.size()));
  if (!m.isFinite().all())
    throw NumericError(std::string("non-finite value produced by op '") + op + "'");
}

/// Builds the output node for an op: checks the forward value for NaN/Inf,
/// and records parents + backward closure only when the tape is active and
/// some input requires grad. Backward closures must reach inputs through
/// node.parents, never by capturing tensors.
template <typename S>
Tensor<S> make_op(const char* name, Shape out_shape, std::vector<S> out_value,
                  std::vector<Tensor<S>> inputs,
                  std::function<void(TensorNode<S>&)> backward) {
  if (shape_size(out_shape) != static_cast<Index>(out_value.size()))
    throw ShapeError(std::string("internal: op '") + name + "' output size mismatch");
  check_finite(out_value, name);
  auto node = std::make_shared<TensorNode<S>>();
  node->shape = std::move(out_shape);
  node->value = std::move(out_value);
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs && grad_enabled()) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node());
    node->backward_fn = std::move(backward);
  }
  return Tensor<S>(std::move(node));
}

template <typename S>
Eigen::Map<ArrX<S>> grad_of(TensorNode<S>& n) {
  n.ensure_grad();
  return {n.grad.data(), n.size()};
}

template <typename S>
Eigen::Map<const ArrX<S>> out_grad(const TensorNode<S>& n) {
  return {n.grad.data(), n.size()};
}

template <typename S>
Eigen::Map<const ArrX<S>> flat(const TensorNode<S>& n) {
  return {n.value.data(), n.size()};
}

template <typename S>
Eigen::Map<const ArrX<S>> flat(const Tensor<S>& t) {
  return {t.values().data(), t.size()};
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

/// Rows/cols view of a tensor treated as (R, C) with C = last dimension.
inline std::pair<Index, Index> rows_cols(const Shape& s, const char* op) {
  if (s.empty()) throw ShapeError(std::string(op) + ": scalar input not supported");
  Index c = s.back();
  Index r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return {r, c};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary (exact shape match)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  std::vector<S> out(a.values().begin(), a.values().end());
  Eigen::Map<ArrX<S>>(out.data(), a.size()) += detail::flat(b);
  return detail::make_op<S>(
      "add", a.shape(), std::move(out), {a, b}, [](detail::TensorNode<S>& n) {
        auto g = detail::out_grad(n);
        for (int i = 0; i < 2; ++i) {
          auto& p = *n.parents[static_cast<std::size_t>(i)];
          if (p.requires_grad) detail::grad_of(p) += g;
        }
      });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<S> out(a.values().begin(), a.values().end());
  Eigen::Map<ArrX<S>>(out.data(), a.size()) -= detail::flat(b);
  return detail::make_op<S>(
      "sub", a.shape(), std::move(out), {a, b}, [](detail::TensorNode<S>& n) {
        auto g = detail::out_grad(n);
        if (n.parents[0]->requires_grad) detail::grad_of(*n.parents[0]) += g;
        if (n.parents[1]->requires_grad) detail::grad_of(*n.parents[1]) -= g;
      });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<S> out(static_cast<std::size_t>(a.size()));
  Eigen::Map<ArrX<S>>(out.data(), a.size()) = detail::flat(a) * detail::flat(b);
  return detail::make_op<S>(
      "mul", a.shape(), std::move(out), {a, b}, [](detail::TensorNode<S>& n) {
        auto g = detail::out_grad(n);
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) detail::grad_of(a) += g * detail::flat(b);
        if (b.requires_grad) detail::grad_of(b) += g * detail::flat(a);
      });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "div");
  std::vector<S> out(static_cast<std::size_t>(a.size()));
  Eigen::Map<ArrX<S>>(out.data(), a.size()) = detail::flat(a) / detail::flat(b);
  return detail::make_op<S>(
      "div", a.shape(), std::move(out), {a, b}, [](detail::TensorNode<S>& n) {
        auto g = detail::out_grad(n);
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) detail::grad_of(a) += g / detail::flat(b);
        if (b.requires_grad)
          detail::grad_of(b) -= g * detail::flat(a) / detail::flat(b).square();
      });
}

// ---------------------------------------------------------------------------
// broadcast over rows: x is (..., C), v is (C)
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
void check_rowwise(const Tensor<S>& x, const Tensor<S>& v, const char* op) {
  if (v.rank() != 1)
    throw ShapeError(std::string(op) + ": vector operand must be rank-1, got " + shape_str(v.shape()));
  auto [r, c] = rows_cols(x.shape(), op);
  (void)r;
  if (c != v.dim(0))
    throw ShapeError(std::string(op) + ": last dim " + std::to_string(c) +
                     " != vector length " + std::to_string(v.dim(0)));
}

}  // namespace detail

template <typename S>
Tensor<S> add_rowwise(const Tensor<S>& x, const Tensor<S>& v) {
  detail::check_rowwise(x, v, "add_rowwise");
  auto [r, c] = detail::rows_cols(x.shape(), "add_rowwise");
  std::vector<S> out(x.values().begin(), x.values().end());
  Eigen::Map<MatRM<S>> o(out.data(), r, c);
  Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> row(v.values().data(), c);
  o.rowwise() += row;
  return detail::make_op<S>(
      "add_rowwise", x.shape(), std::move(out), {x, v},
      [r = r, c = c](detail::TensorNode<S>& n) {
        Eigen::Map<const MatRM<S>> g(n.grad.data(), r, c);
        auto& x = *n.parents[0];
        auto& v = *n.parents[1];
        if (x.requires_grad) detail::grad_of(x) += detail::out_grad(n);
        if (v.requires_grad) {
          v.ensure_grad();
          Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gv(v.grad.data(), c);
          gv += g.colwise().sum();
        }
      });
}

template <typename S>
Tensor<S> mul_rowwise(const Tensor<S>& x, const Tensor<S>& v) {
  detail::check_rowwise(x, v, "mul_rowwise");
  auto [r, c] = detail::rows_cols(x.shape(), "mul_rowwise");
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  Eigen::Map<MatRM<S>> o(out.data(), r, c);
  Eigen::Map<const MatRM<S>> xv(x.values().data(), r, c);
  Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> row(v.values().data(), c);
  o = xv.array().rowwise() * row.array();
  return detail::make_op<S>(
      "mul_rowwise", x.shape(), std::move(out), {x, v},
      [r = r, c = c](detail::TensorNode<S>& n) {
        Eigen::Map<const MatRM<S>> g(n.grad.data(), r, c);
        auto& x = *n.parents[0];
        auto& v = *n.parents[1];
        Eigen::Map<const MatRM<S>> xv(x.value.data(), r, c);
        Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> row(v.value.data(), c);
        if (x.requires_grad) {
          x.ensure_grad();
          Eigen::Map<MatRM<S>> gx(x.grad.data(), r, c);
          gx.array() += g.array().rowwise() * row.array();
        }
        if (v.requires_grad) {
          v.ensure_grad();
          Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gv(v.grad.data(), c);
          gv.array() += (g.array() * xv.array()).colwise().sum();
        }
      });
}

// ---------------------------------------------------------------------------
// scalar-constant and unary elementwise
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  Eigen::Map<ArrX<S>>(out.data(), x.size()) = detail::flat(x) * c;
  return detail::make_op<S>("scale", x.shape(), std::move(out), {x},
                            [c](detail::TensorNode<S>& n) {
                              auto& x = *n.parents[0];
                              if (x.requires_grad)
                                detail::grad_of(x) += detail::out_grad(n) * c;
                            });
}

template <typename S>
Tensor<S> add_const(const Tensor<S>& x, S c) {
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  Eigen::Map<ArrX<S>>(out.data(), x.size()) = detail::flat(x) + c;
  return detail::make_op<S>("add_const", x.shape(), std::move(out), {x},
                            [](detail::TensorNode<S>& n) {
                              auto& x = *n.parents[0];
                              if (x.requires_grad)
                                detail::grad_of(x) += detail::out_grad(n);
                            });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  Eigen::Map<ArrX<S>>(out.data(), x.size()) = detail::flat(x).max(S(0));
  return detail::make_op<S>(
      "relu", x.shape(), std::move(out), {x}, [](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (!x.requires_grad) return;
        detail::grad_of(x) +=
            detail::out_grad(n) * (detail::flat(x) > S(0)).template cast<S>();
      });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  auto xv = detail::flat(x);
  Eigen::Map<ArrX<S>> o(out.data(), x.size());
  // logistic with overflow-safe split on sign
  o = (xv >= S(0))
          .select(S(1) / (S(1) + (-xv).exp()),
                  xv.exp() / (S(1) + xv.exp()));
  return detail::make_op<S>(
      "sigmoid", x.shape(), std::move(out), {x}, [](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (!x.requires_grad) return;
        auto y = detail::flat(n);
        detail::grad_of(x) += detail::out_grad(n) * y * (S(1) - y);
      });
}

template <typename S>
Tensor<S> tanh_(const Tensor<S>& x) {
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  Eigen::Map<ArrX<S>>(out.data(), x.size()) = detail::flat(x).tanh();
  return detail::make_op<S>(
      "tanh", x.shape(), std::move(out), {x}, [](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (!x.requires_grad) return;
        auto y = detail::flat(n);
        detail::grad_of(x) += detail::out_grad(n) * (S(1) - y * y);
      });
}

template <typename S>
Tensor<S> log10_(const Tensor<S>& x) {
  for (S v : x.values())
    if (!(v > S(0))) throw NumericError("log10 requires strictly positive input");
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  Eigen::Map<ArrX<S>>(out.data(), x.size()) = detail::flat(x).log10();
  return detail::make_op<S>(
      "log10", x.shape(), std::move(out), {x}, [](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (!x.requires_grad) return;
        const S ln10 = std::log(S(10));
        detail::grad_of(x) += detail::out_grad(n) / (detail::flat(x) * ln10);
      });
}

template <typename S>
Tensor<S> sqrt_(const Tensor<S>& x) {
  for (S v : x.values())
    if (!(v >= S(0))) throw NumericError("sqrt requires non-negative input");
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  Eigen::Map<ArrX<S>>(out.data(), x.size()) = detail::flat(x).sqrt();
  return detail::make_op<S>(
      "sqrt", x.shape(), std::move(out), {x}, [](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (!x.requires_grad) return;
        auto y = detail::flat(n);
        detail::grad_of(x) += detail::out_grad(n) / (S(2) * y);
      });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  // accumulate in double: loss terms over long signals lose precision in f32
  double acc = 0.0;
  for (S v : x.values()) acc += static_cast<double>(v);
  return detail::make_op<S>("sum", Shape{}, {static_cast<S>(acc)}, {x},
                            [](detail::TensorNode<S>& n) {
                              auto& x = *n.parents[0];
                              if (x.requires_grad)
                                detail::grad_of(x) += n.grad[0];
                            });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  double acc = 0.0;
  for (S v : x.values()) acc += static_cast<double>(v);
  const S inv_n = S(1) / static_cast<S>(x.size());
  return detail::make_op<S>(
      "mean", Shape{}, {static_cast<S>(acc / static_cast<double>(x.size()))},
      {x}, [inv_n](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (x.requires_grad) detail::grad_of(x) += n.grad[0] * inv_n;
      });
}

/// Biased variance over all elements (matches normalization statistics).
template <typename S>
Tensor<S> variance(const Tensor<S>& x) {
  const Index n = x.size();
  if (n == 0) throw ShapeError("variance of empty tensor");
  double m = 0.0, sq = 0.0;
  for (S v : x.values()) {
    m += static_cast<double>(v);
    sq += static_cast<double>(v) * static_cast<double>(v);
  }
  m /= static_cast<double>(n);
  double var = sq / static_cast<double>(n) - m * m;
  if (var < 0.0) var = 0.0;
  return detail::make_op<S>(
      "variance", Shape{}, {static_cast<S>(var)}, {x},
      [n, m](detail::TensorNode<S>& nd) {
        auto& x = *nd.parents[0];
        if (!x.requires_grad) return;
        const S coef = nd.grad[0] * S(2) / static_cast<S>(n);
        detail::grad_of(x) += coef * (detail::flat(x) - static_cast<S>(m));
      });
}

// ---------------------------------------------------------------------------
// linear algebra / structure
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul requires rank-2 operands, got " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul inner dims differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<S> out(static_cast<std::size_t>(m * n));
  Eigen::Map<MatRM<S>>(out.data(), m, n) = as_matrix(a) * as_matrix(b);
  return detail::make_op<S>(
      "matmul", Shape{m, n}, std::move(out), {a, b},
      [m, k, n](detail::TensorNode<S>& nd) {
        Eigen::Map<const MatRM<S>> g(nd.grad.data(), m, n);
        auto& a = *nd.parents[0];
        auto& b = *nd.parents[1];
        Eigen::Map<const MatRM<S>> av(a.value.data(), m, k);
        Eigen::Map<const MatRM<S>> bv(b.value.data(), k, n);
        if (a.requires_grad) {
          a.ensure_grad();
          Eigen::Map<MatRM<S>>(a.grad.data(), m, k).noalias() += g * bv.transpose();
        }
        if (b.requires_grad) {
          b.ensure_grad();
          Eigen::Map<MatRM<S>>(b.grad.data(), k, n).noalias() += av.transpose() * g;
        }
      });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("transpose requires rank-2, got " + shape_str(x.shape()));
  const Index r = x.dim(0), c = x.dim(1);
  std::vector<S> out(static_cast<std::size_t>(r * c));
  Eigen::Map<MatRM<S>>(out.data(), c, r) = as_matrix(x).transpose();
  return detail::make_op<S>(
      "transpose", Shape{c, r}, std::move(out), {x},
      [r, c](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (!x.requires_grad) return;
        x.ensure_grad();
        Eigen::Map<const MatRM<S>> g(n.grad.data(), c, r);
        Eigen::Map<MatRM<S>>(x.grad.data(), r, c) += g.transpose();
      });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
  if (shape_size(new_shape) != x.size())
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape) +
                     " changes element count");
  std::vector<S> out(x.values().begin(), x.values().end());
  return detail::make_op<S>("reshape", std::move(new_shape), std::move(out), {x},
                            [](detail::TensorNode<S>& n) {
                              auto& x = *n.parents[0];
                              if (x.requires_grad)
                                detail::grad_of(x) += detail::out_grad(n);
                            });
}

// ---------------------------------------------------------------------------
// slice / concat / reverse (rank-1 and rank-2, axis 0 or 1)
// ---------------------------------------------------------------------------

namespace detail {

inline void check_axis(int rank, int axis, const char* op) {
  if (rank < 1 || rank > 2)
    throw ShapeError(std::string(op) + ": only rank-1/rank-2 supported, got rank " +
                     std::to_string(rank));
  if (axis < 0 || axis >= rank)
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
}

}  // namespace detail

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, Index start, Index len) {
  detail::check_axis(x.rank(), axis, "slice");
  if (start < 0 || len < 0 || start + len > x.dim(axis))
    throw ShapeError("slice [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") exceeds dim " +
                     std::to_string(x.dim(axis)));
  Shape os = x.shape();
  os[static_cast<std::size_t>(axis)] = len;
  const Index r = x.rank() == 2 ? x.dim(0) : x.dim(0);
  const Index c = x.rank() == 2 ? x.dim(1) : 1;
  std::vector<S> out(static_cast<std::size_t>(shape_size(os)));
  const S* src = x.values().data();
  if (x.rank() == 1 || axis == 0) {
    const Index row_len = (x.rank() == 1) ? 1 : c;
    std::copy(src + start * row_len, src + (start + len) * row_len, out.data());
  } else {
    for (Index i = 0; i < r; ++i)
      std::copy(src + i * c + start, src + i * c + start + len, out.data() + i * len);
  }
  return detail::make_op<S>(
      "slice", std::move(os), std::move(out), {x},
      [axis, start, len, r, c, rank = x.rank()](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (!x.requires_grad) return;
        x.ensure_grad();
        const S* g = n.grad.data();
        S* gx = x.grad.data();
        if (rank == 1 || axis == 0) {
          const Index row_len = (rank == 1) ? 1 : c;
          for (Index i = 0; i < len * row_len; ++i) gx[start * row_len + i] += g[i];
        } else {
          for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < len; ++j) gx[i * c + start + j] += g[i * len + j];
        }
      });
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int rank = parts[0].rank();
  detail::check_axis(rank, axis, "concat");
  Shape os = parts[0].shape();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: mixed ranks");
    for (int d = 0; d < rank; ++d)
      if (d != axis && p.dim(d) != os[static_cast<std::size_t>(d)])
        throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()) + " on non-concat axis");
    total += p.dim(axis);
  }
  os[static_cast<std::size_t>(axis)] = total;
  std::vector<S> out(static_cast<std::size_t>(shape_size(os)));
  std::vector<Index> widths(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) widths[i] = parts[i].dim(axis);

  if (rank == 1 || axis == 0) {
    S* dst = out.data();
    for (const auto& p : parts) {
      std::copy(p.values().begin(), p.values().end(), dst);
      dst += p.size();
    }
  } else {
    const Index rows = os[0];
    Index col0 = 0;
    for (const auto& p : parts) {
      const Index pc = p.dim(1);
      const S* src = p.values().data();
      for (Index i = 0; i < rows; ++i)
        std::copy(src + i * pc, src + (i + 1) * pc, out.data() + i * total + col0);
      col0 += pc;
    }
  }
  return detail::make_op<S>(
      "concat", std::move(os), std::move(out), parts,
      [axis, rank, widths, total](detail::TensorNode<S>& n) {
        const S* g = n.grad.data();
        if (rank == 1 || axis == 0) {
          Index off = 0;
          for (std::size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = *n.parents[i];
            if (p.requires_grad) {
              p.ensure_grad();
              for (Index j = 0; j < p.size(); ++j) p.grad[static_cast<std::size_t>(j)] += g[off + j];
            }
            off += p.size();
          }
        } else {
          const Index rows = n.shape[0];
          Index col0 = 0;
          for (std::size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = *n.parents[i];
            const Index pc = widths[i];
            if (p.requires_grad) {
              p.ensure_grad();
              for (Index r = 0; r < rows; ++r)
                for (Index j = 0; j < pc; ++j)
                  p.grad[static_cast<std::size_t>(r * pc + j)] += g[r * total + col0 + j];
            }
            col0 += pc;
          }
        }
      });
}

template <typename S>
Tensor<S> reverse(const Tensor<S>& x, int axis) {
  detail::check_axis(x.rank(), axis, "reverse");
  const Index r = x.rank() == 2 ? x.dim(0) : x.dim(0);
  const Index c = x.rank() == 2 ? x.dim(1) : 1;
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  const S* src = x.values().data();
  if (x.rank() == 1 || axis == 0) {
    const Index row_len = (x.rank() == 1) ? 1 : c;
    const Index rows = (x.rank() == 1) ? r : r;
    for (Index i = 0; i < rows; ++i)
      std::copy(src + i * row_len, src + (i + 1) * row_len,
                out.data() + (rows - 1 - i) * row_len);
  } else {
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) out[static_cast<std::size_t>(i * c + c - 1 - j)] = src[i * c + j];
  }
  return detail::make_op<S>(
      "reverse", x.shape(), std::move(out), {x},
      [axis, r, c, rank = x.rank()](detail::TensorNode<S>& n) {
        auto& x = *n.parents[0];
        if (!x.requires_grad) return;
        x.ensure_grad();
        const S* g = n.grad.data();
        S* gx = x.grad.data();
        if (rank == 1 || axis == 0) {
          const Index row_len = (rank == 1) ? 1 : c;
          for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < row_len; ++j)
              gx[i * row_len + j] += g[(r - 1 - i) * row_len + j];
        } else {
          for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) gx[i * c + j] += g[i * c + c - 1 - j];
        }
      });
}

/// Flips the frame (first) axis of a (K, N) sequence or (K,) signal.
template <typename S>
Tensor<S> reverse_time(const Tensor<S>& x) {
  return reverse(x, 0);
}

/// Trims or zero-pads a rank-1 signal to exactly `len` samples. Gradients
/// flow through the kept prefix; padded samples are constants.
template <typename S>
Tensor<S> fit_length(const Tensor<S>& x, Index len) {
  if (x.rank() != 1) throw ShapeError("fit_length: expected rank-1, got " + shape_str(x.shape()));
  if (len <= 0) throw ShapeError("fit_length: target length must be positive");
  if (x.dim(0) == len) return x;
  if (x.dim(0) > len) return slice(x, 0, 0, len);
  return concat<S>({x, Tensor<S>::zeros({len - x.dim(0)})}, 0);
}

}  // namespace sep
