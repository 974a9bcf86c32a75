#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sep/numcore/ops.hpp"
#include "sep/numcore/rng.hpp"
#include "sep/numcore/tensor.hpp"

namespace sep {

template <typename S>
struct FcParams {
  Tensor<S> weight;  // (out_dim, in_dim)
  Tensor<S> bias;    // (out_dim)

  Index in_dim() const { return weight.dim(1); }
  Index out_dim() const { return weight.dim(0); }

  static FcParams init(Index in_dim, Index out_dim, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    std::vector<S> w(static_cast<std::size_t>(out_dim * in_dim));
    std::vector<S> b(static_cast<std::size_t>(out_dim));
    for (auto& v : w) v = static_cast<S>(rng.uniform(-bound, bound));
    for (auto& v : b) v = static_cast<S>(rng.uniform(-bound, bound));
    FcParams p;
    p.weight = Tensor<S>::from_data({out_dim, in_dim}, std::move(w));
    p.bias = Tensor<S>::from_data({out_dim}, std::move(b));
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

/// Per-frame affine map of a (K, in_dim) sequence to (K, out_dim).
template <typename S>
Tensor<S> fc_forward(const FcParams<S>& p, const Tensor<S>& x) {
  if (x.rank() != 2 || x.dim(1) != p.in_dim())
    throw ShapeError("fc_forward: input " + shape_str(x.shape()) +
                     " does not match in_dim " + std::to_string(p.in_dim()));
  return add_rowwise(matmul(x, transpose(p.weight)), p.bias);
}

}  // namespace sep
