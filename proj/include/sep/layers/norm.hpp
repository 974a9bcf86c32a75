#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sep/numcore/ops.hpp"
#include "sep/numcore/tensor.hpp"

namespace sep {

enum class NormKind { Gln, Cln };

template <typename S>
struct NormParams {
  Tensor<S> gamma;  // (N) trainable scale
  Tensor<S> beta;   // (N) trainable shift
  double eps = 1e-8;

  Index channels() const { return gamma.dim(0); }

  static NormParams init(Index n, double eps = 1e-8) {
    NormParams p;
    p.gamma = Tensor<S>::full({n}, S(1));
    p.beta = Tensor<S>::zeros({n});
    p.eps = eps;
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

namespace detail {

template <typename S>
void check_norm_input(const NormParams<S>& p, const Tensor<S>& f, const char* op) {
  if (f.rank() != 2)
    throw ShapeError(std::string(op) + ": expected (K, N) sequence, got " + shape_str(f.shape()));
  if (f.dim(1) != p.channels())
    throw ShapeError(std::string(op) + ": channel dim " + std::to_string(f.dim(1)) +
                     " != param length " + std::to_string(p.channels()));
  if (!(p.eps > 0.0)) throw NumericError(std::string(op) + ": eps must be positive");
}

}  // namespace detail

/// Global layer normalization: one mean/variance over all K*N entries,
/// then per-channel affine. Statistics accumulate in double.
template <typename S>
Tensor<S> gln_forward(const NormParams<S>& p, const Tensor<S>& f) {
  detail::check_norm_input(p, f, "gln_forward");
  const Index k = f.dim(0), c = f.dim(1);
  const Index n = k * c;
  double s = 0.0, s2 = 0.0;
  for (S v : f.values()) {
    s += static_cast<double>(v);
    s2 += static_cast<double>(v) * static_cast<double>(v);
  }
  const double mu = s / static_cast<double>(n);
  const double var = std::max(s2 / static_cast<double>(n) - mu * mu, 0.0);
  const double inv = 1.0 / std::sqrt(var + p.eps);

  std::vector<S> out(static_cast<std::size_t>(n));
  const S* x = f.values().data();
  const S* ga = p.gamma.values().data();
  const S* be = p.beta.values().data();
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < c; ++j) {
      const double xh = (static_cast<double>(x[i * c + j]) - mu) * inv;
      out[static_cast<std::size_t>(i * c + j)] =
          static_cast<S>(xh * static_cast<double>(ga[j]) + static_cast<double>(be[j]));
    }

  return detail::make_op<S>(
      "gln", f.shape(), std::move(out), {f, p.gamma, p.beta},
      [k, c, mu, inv](detail::TensorNode<S>& nd) {
        const Index n = k * c;
        auto& xp = *nd.parents[0];
        auto& gp = *nd.parents[1];
        auto& bp = *nd.parents[2];
        const S* x = xp.value.data();
        const S* ga = gp.value.data();
        const S* g = nd.grad.data();

        double a_sum = 0.0, b_sum = 0.0;
        for (Index i = 0; i < k; ++i)
          for (Index j = 0; j < c; ++j) {
            const double gh = static_cast<double>(g[i * c + j]) * static_cast<double>(ga[j]);
            const double xh = (static_cast<double>(x[i * c + j]) - mu) * inv;
            a_sum += gh;
            b_sum += gh * xh;
          }
        if (xp.requires_grad) {
          xp.ensure_grad();
          S* gx = xp.grad.data();
          for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < c; ++j) {
              const double gh = static_cast<double>(g[i * c + j]) * static_cast<double>(ga[j]);
              const double xh = (static_cast<double>(x[i * c + j]) - mu) * inv;
              gx[i * c + j] += static_cast<S>(
                  inv * (gh - a_sum / static_cast<double>(n) -
                         xh * b_sum / static_cast<double>(n)));
            }
        }
        if (gp.requires_grad) {
          gp.ensure_grad();
          S* gg = gp.grad.data();
          for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < c; ++j) {
              const double xh = (static_cast<double>(x[i * c + j]) - mu) * inv;
              gg[j] += static_cast<S>(static_cast<double>(g[i * c + j]) * xh);
            }
        }
        if (bp.requires_grad) {
          bp.ensure_grad();
          S* gb = bp.grad.data();
          for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
      });
}

/// Cumulative layer normalization: frame k is normalized by the mean and
/// biased variance of all N*k entries of frames 1..k, then the per-channel
/// affine. Running statistics are cumulative sums of values and squares, so
/// a streaming step costs O(N).
///
/// The row width may be a multiple of the channel count (a frame holding
/// several channel groups, as in chunked features); gamma/beta then tile
/// across the row while the statistics still cover the whole row prefix.
template <typename S>
Tensor<S> cln_forward(const NormParams<S>& p, const Tensor<S>& f) {
  if (f.rank() != 2)
    throw ShapeError("cln_forward: expected (K, N) sequence, got " + shape_str(f.shape()));
  if (f.dim(1) == 0 || f.dim(1) % p.channels() != 0)
    throw ShapeError("cln_forward: row width " + std::to_string(f.dim(1)) +
                     " is not a multiple of channel count " +
                     std::to_string(p.channels()));
  if (!(p.eps > 0.0)) throw NumericError("cln_forward: eps must be positive");
  const Index k = f.dim(0), c = f.dim(1);
  const Index nch = p.channels();
  const double eps = p.eps;

  std::vector<S> out(static_cast<std::size_t>(k * c));
  const S* x = f.values().data();
  const S* ga = p.gamma.values().data();
  const S* be = p.beta.values().data();
  double cs = 0.0, cs2 = 0.0;
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < c; ++j) {
      const double v = static_cast<double>(x[i * c + j]);
      cs += v;
      cs2 += v * v;
    }
    const double nk = static_cast<double>((i + 1) * c);
    const double mu = cs / nk;
    const double var = std::max(cs2 / nk - mu * mu, 0.0);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (Index j = 0; j < c; ++j) {
      const double xh = (static_cast<double>(x[i * c + j]) - mu) * inv;
      out[static_cast<std::size_t>(i * c + j)] = static_cast<S>(
          xh * static_cast<double>(ga[j % nch]) + static_cast<double>(be[j % nch]));
    }
  }

  return detail::make_op<S>(
      "cln", f.shape(), std::move(out), {f, p.gamma, p.beta},
      [k, c, nch, eps](detail::TensorNode<S>& nd) {
        auto& xp = *nd.parents[0];
        auto& gp = *nd.parents[1];
        auto& bp = *nd.parents[2];
        const S* x = xp.value.data();
        const S* ga = gp.value.data();
        const S* g = nd.grad.data();

        // Recompute per-frame statistics, then per-frame sums of the
        // upstream gradient against them.
        std::vector<double> mu(static_cast<std::size_t>(k)), inv(static_cast<std::size_t>(k));
        {
          double cs = 0.0, cs2 = 0.0;
          for (Index i = 0; i < k; ++i) {
            for (Index j = 0; j < c; ++j) {
              const double v = static_cast<double>(x[i * c + j]);
              cs += v;
              cs2 += v * v;
            }
            const double nk = static_cast<double>((i + 1) * c);
            mu[static_cast<std::size_t>(i)] = cs / nk;
            const double var = std::max(cs2 / nk - mu[static_cast<std::size_t>(i)] * mu[static_cast<std::size_t>(i)], 0.0);
            inv[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(var + eps);
          }
        }

        if (gp.requires_grad || bp.requires_grad) {
          if (gp.requires_grad) gp.ensure_grad();
          if (bp.requires_grad) bp.ensure_grad();
          for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < c; ++j) {
              const double xh = (static_cast<double>(x[i * c + j]) - mu[static_cast<std::size_t>(i)]) *
                                inv[static_cast<std::size_t>(i)];
              if (gp.requires_grad)
                gp.grad[static_cast<std::size_t>(j % nch)] +=
                    static_cast<S>(static_cast<double>(g[i * c + j]) * xh);
              if (bp.requires_grad) bp.grad[static_cast<std::size_t>(j % nch)] += g[i * c + j];
            }
        }

        if (!xp.requires_grad) return;
        xp.ensure_grad();
        // Per-frame reductions of ghat = g*gamma against the statistics:
        //   A_i = sum_j ghat, B_i = sum_j ghat*(x - mu_i)
        // then suffix sums push the mean/variance contributions of every
        // later frame back onto frame i.
        std::vector<double> a(static_cast<std::size_t>(k)), b(static_cast<std::size_t>(k));
        for (Index i = 0; i < k; ++i) {
          double ai = 0.0, bi = 0.0;
          for (Index j = 0; j < c; ++j) {
            const double gh =
                static_cast<double>(g[i * c + j]) * static_cast<double>(ga[j % nch]);
            ai += gh;
            bi += gh * (static_cast<double>(x[i * c + j]) - mu[static_cast<std::size_t>(i)]);
          }
          a[static_cast<std::size_t>(i)] = ai;
          b[static_cast<std::size_t>(i)] = bi;
        }
        double s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::vector<double> suf1(static_cast<std::size_t>(k)), suf2(static_cast<std::size_t>(k)),
            suf3(static_cast<std::size_t>(k));
        for (Index i = k - 1; i >= 0; --i) {
          const double nk = static_cast<double>((i + 1) * c);
          const double iv = inv[static_cast<std::size_t>(i)];
          const double iv3 = iv * iv * iv;
          s1 += a[static_cast<std::size_t>(i)] * iv / nk;
          s2 += b[static_cast<std::size_t>(i)] * iv3 / nk;
          s3 += b[static_cast<std::size_t>(i)] * iv3 * mu[static_cast<std::size_t>(i)] / nk;
          suf1[static_cast<std::size_t>(i)] = s1;
          suf2[static_cast<std::size_t>(i)] = s2;
          suf3[static_cast<std::size_t>(i)] = s3;
        }
        S* gx = xp.grad.data();
        for (Index i = 0; i < k; ++i)
          for (Index j = 0; j < c; ++j) {
            const double gh =
                static_cast<double>(g[i * c + j]) * static_cast<double>(ga[j % nch]);
            const double xv = static_cast<double>(x[i * c + j]);
            gx[i * c + j] += static_cast<S>(gh * inv[static_cast<std::size_t>(i)] -
                                            suf1[static_cast<std::size_t>(i)] -
                                            xv * suf2[static_cast<std::size_t>(i)] +
                                            suf3[static_cast<std::size_t>(i)]);
          }
      });
}

}  // namespace sep
