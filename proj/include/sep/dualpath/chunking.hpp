#pragma once

#include <string>
#include <vector>

#include "sep/numcore/ops.hpp"

namespace sep {

/// A (K, N) sequence cut into C half-overlapping chunks of chunk_len frames,
/// stored chunk-major as one (C*chunk_len, N) tensor. pad_front is always one
/// hop of zero frames; pad_back completes the last chunk.
template <typename S>
struct ChunkedFeature {
  Tensor<S> data;
  Index chunks = 0;
  Index chunk_len = 0;
  Index hop = 0;
  Index pad_front = 0;
  Index pad_back = 0;
  Index orig_frames = 0;

  Index channels() const { return data.dim(1); }
  Index padded_frames() const { return pad_front + orig_frames + pad_back; }

  /// Chunk c as a (chunk_len, N) view into the stored tensor.
  Tensor<S> chunk(Index c) const { return slice(data, 0, c * chunk_len, chunk_len); }

  void check() const {
    if (chunk_len != 2 * hop || hop < 1)
      throw ShapeError("chunked feature requires chunk_len == 2*hop");
    if (data.rank() != 2 || data.dim(0) != chunks * chunk_len)
      throw ShapeError("chunked feature tensor shape does not match metadata");
    if (padded_frames() != chunk_len + (chunks - 1) * hop)
      throw ShapeError("chunked feature pad metadata inconsistent with chunk count");
  }
};

/// Splits a (K, N) feature into 50% overlapped chunks: one hop of zero
/// frames in front, zero frames behind up to the least length
/// chunk_len + m*hop that holds everything.
template <typename S>
ChunkedFeature<S> chunk_split(const Tensor<S>& x, Index chunk_len, Index hop) {
  if (chunk_len != 2 * hop || hop < 1)
    throw ShapeError("chunk_split: chunk_len must equal 2*hop, got chunk_len=" +
                     std::to_string(chunk_len) + " hop=" + std::to_string(hop));
  if (x.rank() != 2 || x.dim(0) < 1)
    throw ShapeError("chunk_split: input must be a nonempty (K, N) feature");
  const Index k = x.dim(0), n = x.dim(1);
  const Index front = hop;
  const Index min_len = k + front;
  Index m = 0;
  if (min_len > chunk_len) m = (min_len - chunk_len + hop - 1) / hop;
  const Index padded_len = chunk_len + m * hop;

  std::vector<Tensor<S>> pieces;
  pieces.push_back(Tensor<S>::zeros({front, n}));
  pieces.push_back(x);
  if (padded_len - min_len > 0) pieces.push_back(Tensor<S>::zeros({padded_len - min_len, n}));
  auto padded = concat(pieces, 0);

  ChunkedFeature<S> out;
  out.chunks = m + 1;
  out.chunk_len = chunk_len;
  out.hop = hop;
  out.pad_front = front;
  out.pad_back = padded_len - min_len;
  out.orig_frames = k;
  std::vector<Tensor<S>> chunks;
  chunks.reserve(static_cast<std::size_t>(out.chunks));
  for (Index c = 0; c < out.chunks; ++c)
    chunks.push_back(slice(padded, 0, c * hop, chunk_len));
  out.data = concat(chunks, 0);
  return out;
}

/// Inverse of chunk_split: overlap-add with the chunk hop, divide each
/// padded position by the number of chunks covering it (2 in the interior,
/// 1 in the tail the padding formula leaves single-covered), strip the pads.
template <typename S>
Tensor<S> chunk_merge(const ChunkedFeature<S>& cf) {
  cf.check();
  const Index chunks = cf.chunks, chunk_len = cf.chunk_len, hop = cf.hop;
  const Index n = cf.data.dim(1);
  const Index padded_len = cf.padded_frames();
  const Index front = cf.pad_front, k = cf.orig_frames;

  std::vector<int> cov(static_cast<std::size_t>(padded_len), 0);
  for (Index c = 0; c < chunks; ++c)
    for (Index t = c * hop; t < c * hop + chunk_len; ++t) ++cov[static_cast<std::size_t>(t)];

  std::vector<double> acc(static_cast<std::size_t>(padded_len * n), 0.0);
  const S* src = cf.data.values().data();
  for (Index c = 0; c < chunks; ++c)
    for (Index p = 0; p < chunk_len; ++p) {
      const Index t = c * hop + p;
      for (Index j = 0; j < n; ++j)
        acc[static_cast<std::size_t>(t * n + j)] +=
            static_cast<double>(src[(c * chunk_len + p) * n + j]);
    }
  std::vector<S> out(static_cast<std::size_t>(k * n));
  for (Index t = 0; t < k; ++t)
    for (Index j = 0; j < n; ++j)
      out[static_cast<std::size_t>(t * n + j)] =
          static_cast<S>(acc[static_cast<std::size_t>((front + t) * n + j)] /
                         cov[static_cast<std::size_t>(front + t)]);

  return detail::make_op<S>(
      "chunk_merge", Shape{k, n}, std::move(out), {cf.data},
      [chunks, chunk_len, hop, front, k, n, cov](detail::TensorNode<S>& nd) {
        auto& xp = *nd.parents[0];
        if (!xp.requires_grad) return;
        xp.ensure_grad();
        const S* g = nd.grad.data();
        S* gx = xp.grad.data();
        for (Index c = 0; c < chunks; ++c)
          for (Index p = 0; p < chunk_len; ++p) {
            const Index t = c * hop + p - front;
            if (t < 0 || t >= k) continue;
            const double w = 1.0 / cov[static_cast<std::size_t>(c * hop + p)];
            for (Index j = 0; j < n; ++j)
              gx[(c * chunk_len + p) * n + j] +=
                  static_cast<S>(static_cast<double>(g[t * n + j]) * w);
          }
      });
}

}  // namespace sep
