#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sep/numcore/ops.hpp"
#include "sep/numcore/rng.hpp"
#include "sep/numcore/tensor.hpp"

namespace sep {

enum class Direction { Forward, Backward };

/// Gate rows in w/u/b are ordered (input i, forget f, cell g, output o),
/// H rows per gate.
template <typename S>
struct LstmParams {
  Tensor<S> w;  // (4H, input_dim)
  Tensor<S> u;  // (4H, hidden_dim)
  Tensor<S> b;  // (4H)

  Index input_dim() const { return w.dim(1); }
  Index hidden_dim() const { return u.dim(1); }

  static LstmParams init(Index input_dim, Index hidden_dim, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    auto draw = [&](Shape shape) {
      std::vector<S> v(static_cast<std::size_t>(shape_size(shape)));
      for (auto& x : v) x = static_cast<S>(rng.uniform(-bound, bound));
      return Tensor<S>::from_data(std::move(shape), std::move(v));
    };
    LstmParams p;
    p.w = draw({4 * hidden_dim, input_dim});
    p.u = draw({4 * hidden_dim, hidden_dim});
    p.b = draw({4 * hidden_dim});
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".u", u});
    out.push_back({prefix + ".b", b});
  }
};

namespace detail {

/// Applies the gate nonlinearities to a (1, 4H) pre-activation row.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> lstm_gates(const Tensor<S>& z,
                                           const Tensor<S>& c_prev, Index h) {
  auto i = sigmoid(slice(z, 1, 0, h));
  auto f = sigmoid(slice(z, 1, h, h));
  auto g = tanh_(slice(z, 1, 2 * h, h));
  auto o = sigmoid(slice(z, 1, 3 * h, h));
  auto c = add(mul(f, c_prev), mul(i, g));
  auto h_t = mul(o, tanh_(c));
  return {std::move(h_t), std::move(c)};
}

}  // namespace detail

/// Single cell update. x_t: (1, input_dim); h_prev, c_prev: (1, H).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> lstm_step(const LstmParams<S>& p,
                                          const Tensor<S>& x_t,
                                          const Tensor<S>& h_prev,
                                          const Tensor<S>& c_prev) {
  const Index h = p.hidden_dim();
  if (x_t.rank() != 2 || x_t.dim(0) != 1 || x_t.dim(1) != p.input_dim())
    throw ShapeError("lstm_step: x_t must be (1, input_dim), got " + shape_str(x_t.shape()));
  if (h_prev.shape() != Shape{1, h} || c_prev.shape() != Shape{1, h})
    throw ShapeError("lstm_step: state must be (1, hidden_dim)");
  auto z = add_rowwise(
      add(matmul(x_t, transpose(p.w)), matmul(h_prev, transpose(p.u))), p.b);
  return detail::lstm_gates(z, c_prev, h);
}

/// Scan over a (K, input_dim) sequence from zero initial state; output (K, H).
/// Backward direction is literally reverse_time . forward-scan . reverse_time.
template <typename S>
Tensor<S> lstm_sequence(const LstmParams<S>& p, const Tensor<S>& x,
                        Direction dir = Direction::Forward) {
  if (x.rank() != 2 || x.dim(1) != p.input_dim())
    throw ShapeError("lstm_sequence: input " + shape_str(x.shape()) +
                     " does not match input_dim " + std::to_string(p.input_dim()));
  const Index k = x.dim(0);
  if (k < 1) throw ShapeError("lstm_sequence: empty sequence");
  if (dir == Direction::Backward)
    return reverse_time(lstm_sequence(p, reverse_time(x), Direction::Forward));

  const Index h = p.hidden_dim();
  // Input projection for all frames at once; the recurrent term is added
  // per step. Frame k of z depends only on frame k of x, so causality holds
  // bit for bit.
  auto z_in = add_rowwise(matmul(x, transpose(p.w)), p.b);
  auto h_t = Tensor<S>::zeros({1, h});
  auto c_t = Tensor<S>::zeros({1, h});
  std::vector<Tensor<S>> outs;
  outs.reserve(static_cast<std::size_t>(k));
  for (Index t = 0; t < k; ++t) {
    auto z = add(slice(z_in, 0, t, 1), matmul(h_t, transpose(p.u)));
    auto [h_next, c_next] = detail::lstm_gates(z, c_t, h);
    h_t = std::move(h_next);
    c_t = std::move(c_next);
    outs.push_back(h_t);
  }
  return concat(outs, 0);
}

/// Standard Bi-RNN layer: [forward-scan ‖ backward-scan] on channels, (K, 2H).
template <typename S>
Tensor<S> bilstm_forward(const LstmParams<S>& pf, const LstmParams<S>& pb,
                         const Tensor<S>& x) {
  if (pf.hidden_dim() != pb.hidden_dim())
    throw ShapeError("bilstm_forward: hidden dims differ");
  return concat<S>({lstm_sequence(pf, x, Direction::Forward),
                    lstm_sequence(pb, x, Direction::Backward)},
                   1);
}

}  // namespace sep
