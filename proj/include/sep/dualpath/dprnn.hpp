#pragma once

#include <string>
#include <vector>

#include "sep/dualpath/chunking.hpp"
#include "sep/dualpath/dual_block.hpp"

namespace sep {

enum class ModelKind { StackedRnn, Dprnn };

/// Theoretical system latency. A stacked RNN can emit once a frame's window
/// is complete; the chunk-online DPRNN must wait for a whole chunk of frames.
inline double latency_ms(ModelKind kind, double win_ms, double frame_hop_ms,
                         Index chunk_frames) {
  if (kind == ModelKind::StackedRnn) return win_ms;
  return static_cast<double>(chunk_frames) * frame_hop_ms;
}

/// One DPRNN block: an intra-chunk module along the within-chunk axis and an
/// inter-chunk module across chunks. The intra module is a plain offline
/// Bi-RNN block in both modes; only the inter module switches path.
template <typename S>
struct DprnnBlockParams {
  DualBlockParams<S> intra;  // scheme Standard, gLN
  DualBlockParams<S> inter;  // any scheme, cLN

  static DprnnBlockParams init(Scheme inter_scheme, Index n_channels,
                               Index hidden, Rng& rng) {
    DprnnBlockParams p;
    p.intra = DualBlockParams<S>::init(Scheme::Standard, n_channels, hidden,
                                       NormKind::Gln, rng);
    p.inter = DualBlockParams<S>::init(inter_scheme, n_channels, hidden,
                                       NormKind::Cln, rng);
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    intra.collect(prefix + ".intra", out);
    inter.collect(prefix + ".inter", out);
  }
};

template <typename S>
ChunkedFeature<S> dprnn_block_forward(const DprnnBlockParams<S>& p,
                                      const ChunkedFeature<S>& cf, Path path) {
  cf.check();
  const Index chunks = cf.chunks, chunk_len = cf.chunk_len;
  const Index n = cf.channels();

  // Intra-chunk module: bidirectional per chunk. Offline mode pools the gLN
  // statistics over every chunk at once; online mode keeps them per chunk so
  // nothing leaks across the chunk boundary.
  Tensor<S> h;
  if (path == Path::Offline) {
    std::vector<Tensor<S>> cores;
    cores.reserve(static_cast<std::size_t>(chunks));
    for (Index c = 0; c < chunks; ++c)
      cores.push_back(dual_core(p.intra, cf.chunk(c), Path::Offline));
    h = add(cf.data, gln_forward(p.intra.norm, concat(cores, 0)));
  } else {
    std::vector<Tensor<S>> outs;
    outs.reserve(static_cast<std::size_t>(chunks));
    for (Index c = 0; c < chunks; ++c) {
      auto xc = cf.chunk(c);
      outs.push_back(
          add(xc, gln_forward(p.intra.norm, dual_core(p.intra, xc, Path::Offline))));
    }
    h = concat(outs, 0);
  }

  // Inter-chunk module: one RNN scan across chunks per within-chunk position,
  // then cLN whose cumulative index is the chunk (statistics over all
  // positions and channels of chunks 1..c), then the residual.
  auto wide = reshape(h, {chunks, chunk_len * n});
  std::vector<Tensor<S>> cores;
  cores.reserve(static_cast<std::size_t>(chunk_len));
  for (Index pos = 0; pos < chunk_len; ++pos)
    cores.push_back(dual_core(p.inter, slice(wide, 1, pos * n, n), path));
  auto normed = cln_forward(p.inter.norm, concat(cores, 1));

  ChunkedFeature<S> out = cf;
  out.data = reshape(add(wide, normed), {chunks * chunk_len, n});
  return out;
}

template <typename S>
ChunkedFeature<S> dprnn_stack_forward(const std::vector<DprnnBlockParams<S>>& blocks,
                                      const ChunkedFeature<S>& cf, Path path) {
  ChunkedFeature<S> h = cf;
  for (const auto& b : blocks) h = dprnn_block_forward(b, h, path);
  return h;
}

}  // namespace sep
