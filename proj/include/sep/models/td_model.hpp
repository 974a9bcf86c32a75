#pragma once

#include <string>
#include <vector>

#include "sep/codec/conv_codec.hpp"
#include "sep/dualpath/chunking.hpp"
#include "sep/dualpath/dprnn.hpp"
#include "sep/layers/fc.hpp"
#include "sep/layers/norm.hpp"
#include "sep/models/config.hpp"
#include "sep/numcore/ops.hpp"
#include "sep/numcore/rng.hpp"

namespace sep {

/// Learned-basis masking separator. The waveform is encoded by a strided
/// linear basis, cLN-normalized, processed by chunked dual-path blocks whose
/// inter-chunk modules carry the path switch, and masked per speaker before
/// decoding. One parameter set serves both paths.
template <typename S>
struct TdModel {
  using scalar_type = S;

  TdModelConfig cfg;
  ConvCodecParams<S> codec;
  NormParams<S> enc_norm;                   // cLN over the encoded channels
  std::vector<DprnnBlockParams<S>> blocks;  // chunked dual-path blocks
  FcParams<S> mask_head;                    // n_kernels -> n_speakers * n_kernels

  static TdModel init(const TdModelConfig& cfg, Rng& rng) {
    cfg.validate();
    TdModel m;
    m.cfg = cfg;
    m.codec = ConvCodecParams<S>::init(cfg.kernel_len, cfg.n_kernels, rng);
    m.enc_norm = NormParams<S>::init(cfg.n_kernels);
    m.blocks.reserve(static_cast<std::size_t>(cfg.n_blocks));
    for (Index i = 0; i < cfg.n_blocks; ++i)
      m.blocks.push_back(
          DprnnBlockParams<S>::init(cfg.scheme, cfg.n_kernels, cfg.hidden, rng));
    m.mask_head = FcParams<S>::init(cfg.n_kernels, cfg.n_speakers * cfg.n_kernels, rng);
    return m;
  }

  std::vector<NamedParam<S>> named_parameters() {
    std::vector<NamedParam<S>> out;
    codec.collect("codec", out);
    enc_norm.collect("enc_norm", out);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect("block" + std::to_string(i), out);
    mask_head.collect("mask_head", out);
    return out;
  }
};

/// Lookahead in samples behind which the online path may not reach: a full
/// chunk of frames plus the encoder window that closes the last frame.
inline Index td_lookahead_samples(const TdModelConfig& cfg) {
  return cfg.chunk * cfg.stride() + cfg.kernel_len;
}

template <typename S>
std::vector<Tensor<S>> td_forward(const TdModel<S>& m, const Tensor<S>& wav, Path path) {
  Tensor<S> feat = conv_encode(m.codec, wav);  // (K, n_kernels)
  Tensor<S> x = cln_forward(m.enc_norm, feat);
  ChunkedFeature<S> ch = chunk_split(x, m.cfg.chunk, m.cfg.chunk_hop());
  ch = dprnn_stack_forward(m.blocks, ch, path);
  Tensor<S> masks = relu(fc_forward(m.mask_head, chunk_merge(ch)));

  const Index n = m.cfg.n_kernels;
  std::vector<Tensor<S>> outs;
  outs.reserve(static_cast<std::size_t>(m.cfg.n_speakers));
  for (Index s = 0; s < m.cfg.n_speakers; ++s) {
    Tensor<S> est_feat = mul(slice(masks, 1, s * n, n), feat);
    outs.push_back(fit_length(conv_decode(m.codec, est_feat), wav.dim(0)));
  }
  return outs;
}

}  // namespace sep
