#pragma once

#include <string>
#include <vector>

#include "sep/codec/stft.hpp"
#include "sep/dualpath/dual_block.hpp"
#include "sep/layers/fc.hpp"
#include "sep/layers/norm.hpp"
#include "sep/models/config.hpp"
#include "sep/numcore/ops.hpp"
#include "sep/numcore/rng.hpp"

namespace sep {

/// Magnitude-masking separator. The mixture magnitude is cLN-normalized,
/// refined by a stack of residual dual blocks, and mapped to one ReLU mask
/// per speaker; estimates are resynthesized with the mixture phase. One
/// parameter set serves both the online and the offline path.
template <typename S>
struct FdModel {
  using scalar_type = S;

  FdModelConfig cfg;
  StftConfig stft;
  NormParams<S> enc_norm;                  // cLN over the magnitude bins
  std::vector<DualBlockParams<S>> blocks;  // residual blocks on n_bins channels
  FcParams<S> mask_head;                   // n_bins -> n_speakers * n_bins

  static FdModel init(const FdModelConfig& cfg, const StftConfig& stft, Rng& rng) {
    cfg.validate();
    if (cfg.n_bins != stft.n_bins())
      throw ShapeError("FdModel: config has " + std::to_string(cfg.n_bins) +
                       " bins but the analysis window yields " +
                       std::to_string(stft.n_bins()));
    FdModel m;
    m.cfg = cfg;
    m.stft = stft;
    m.enc_norm = NormParams<S>::init(cfg.n_bins);
    m.blocks.reserve(static_cast<std::size_t>(cfg.n_layers));
    for (Index i = 0; i < cfg.n_layers; ++i)
      m.blocks.push_back(DualBlockParams<S>::init(cfg.scheme, cfg.n_bins,
                                                  cfg.hidden, NormKind::Cln, rng));
    m.mask_head = FcParams<S>::init(cfg.n_bins, cfg.n_speakers * cfg.n_bins, rng);
    return m;
  }

  std::vector<NamedParam<S>> named_parameters() {
    std::vector<NamedParam<S>> out;
    enc_norm.collect("enc_norm", out);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect("block" + std::to_string(i), out);
    mask_head.collect("mask_head", out);
    return out;
  }
};

/// Lookahead in samples behind which the online path may not reach: one
/// analysis window.
inline Index fd_lookahead_samples(const StftConfig& stft) { return stft.win_len(); }

template <typename S>
std::vector<Tensor<S>> fd_forward(const FdModel<S>& m, const Tensor<S>& wav, Path path) {
  Spectrogram<S> mix = stft_analyze(m.stft, wav);
  Tensor<S> x = cln_forward(m.enc_norm, mix.magnitude);
  Tensor<S> h = stack_forward(m.blocks, x, path);
  Tensor<S> masks = relu(fc_forward(m.mask_head, h));

  const Index n = m.cfg.n_bins;
  std::vector<Tensor<S>> outs;
  outs.reserve(static_cast<std::size_t>(m.cfg.n_speakers));
  for (Index s = 0; s < m.cfg.n_speakers; ++s) {
    Tensor<S> est_mag = mul(slice(masks, 1, s * n, n), mix.magnitude);
    Tensor<S> est = istft_synthesize(m.stft, est_mag, mix.phase);
    outs.push_back(fit_length(est, wav.dim(0)));
  }
  return outs;
}

}  // namespace sep
