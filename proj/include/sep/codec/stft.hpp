#pragma once

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "sep/numcore/ops.hpp"

namespace sep {

struct StftConfig {
  double sample_rate_hz = 8000.0;
  double win_ms = 32.0;
  double hop_ms = 8.0;

  Index win_len() const {
    const double w = win_ms * sample_rate_hz / 1000.0;
    const auto n = static_cast<Index>(std::lround(w));
    if (std::abs(w - static_cast<double>(n)) > 1e-9 || n < 2)
      throw ShapeError("stft: window length " + std::to_string(w) +
                       " samples is not a positive integer");
    return n;
  }
  Index hop_len() const {
    const double h = hop_ms * sample_rate_hz / 1000.0;
    const auto n = static_cast<Index>(std::lround(h));
    if (std::abs(h - static_cast<double>(n)) > 1e-9 || n < 1)
      throw ShapeError("stft: hop length " + std::to_string(h) +
                       " samples is not a positive integer");
    if (win_len() % n != 0)
      throw ShapeError("stft: hop must divide the window length");
    return n;
  }
  Index n_bins() const { return win_len() / 2 + 1; }
  Index n_frames(Index samples) const {
    if (samples < win_len())
      throw ShapeError("stft: signal of " + std::to_string(samples) +
                       " samples is shorter than the window");
    return (samples - win_len()) / hop_len() + 1;
  }
};

namespace detail {

/// Periodic Hann window (what makes the overlap-add sums constant).
inline std::vector<double> hann_window(Index len) {
  std::vector<double> w(static_cast<std::size_t>(len));
  for (Index n = 0; n < len; ++n)
    w[static_cast<std::size_t>(n)] =
        0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(len)));
  return w;
}

}  // namespace detail

template <typename S>
struct Spectrogram {
  Tensor<S> magnitude;  // (K, F)
  Tensor<S> phase;      // (K, F)
};

/// Hann-windowed real FFT magnitude/phase analysis. The result is plain data
/// (no tape): masking systems differentiate through the mask and the
/// resynthesis, never through the analysis of the mixture.
template <typename S>
Spectrogram<S> stft_analyze(const StftConfig& cfg, const Tensor<S>& wav) {
  if (wav.rank() != 1) throw ShapeError("stft_analyze: wav must be rank-1");
  const Index l = cfg.win_len(), hop = cfg.hop_len();
  const Index k = cfg.n_frames(wav.dim(0));
  const Index f = cfg.n_bins();
  const auto win = detail::hann_window(l);

  std::vector<S> mag(static_cast<std::size_t>(k * f));
  std::vector<S> ph(static_cast<std::size_t>(k * f));
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> frame(static_cast<std::size_t>(l));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(l));
  const S* x = wav.values().data();
  for (Index i = 0; i < k; ++i) {
    for (Index n = 0; n < l; ++n)
      frame[static_cast<std::size_t>(n)] = {
          static_cast<double>(x[i * hop + n]) * win[static_cast<std::size_t>(n)], 0.0};
    fft.fwd(spec, frame);
    for (Index b = 0; b < f; ++b) {
      const auto& c = spec[static_cast<std::size_t>(b)];
      mag[static_cast<std::size_t>(i * f + b)] = static_cast<S>(std::abs(c));
      ph[static_cast<std::size_t>(i * f + b)] =
          static_cast<S>(std::atan2(c.imag(), c.real()));
    }
  }
  return {Tensor<S>::from_data({k, f}, std::move(mag)),
          Tensor<S>::from_data({k, f}, std::move(ph))};
}

/// Inverse real FFT per frame from (magnitude, phase) half-spectra.
/// Differentiable in both magnitude and phase; bins 0 and L/2 enter through
/// their real parts, matching the Hermitian-extension convention.
template <typename S>
Tensor<S> synth_frames(const Tensor<S>& magnitude, const Tensor<S>& phase, Index l) {
  if (magnitude.shape() != phase.shape() || magnitude.rank() != 2)
    throw ShapeError("synth_frames: magnitude/phase must share a (K, F) shape");
  const Index k = magnitude.dim(0), f = magnitude.dim(1);
  if (f != l / 2 + 1)
    throw ShapeError("synth_frames: expected " + std::to_string(l / 2 + 1) +
                     " bins for window " + std::to_string(l));

  std::vector<S> out(static_cast<std::size_t>(k * l));
  {
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(l));
    std::vector<std::complex<double>> time(static_cast<std::size_t>(l));
    const S* m = magnitude.values().data();
    const S* p = phase.values().data();
    for (Index i = 0; i < k; ++i) {
      for (Index b = 0; b < f; ++b) {
        const double mb = static_cast<double>(m[i * f + b]);
        const double pb = static_cast<double>(p[i * f + b]);
        spec[static_cast<std::size_t>(b)] = std::polar(mb, pb);
      }
      for (Index b = f; b < l; ++b)
        spec[static_cast<std::size_t>(b)] = std::conj(spec[static_cast<std::size_t>(l - b)]);
      fft.inv(time, spec);
      for (Index n = 0; n < l; ++n)
        out[static_cast<std::size_t>(i * l + n)] =
            static_cast<S>(time[static_cast<std::size_t>(n)].real());
    }
  }
  return detail::make_op<S>(
      "synth_frames", Shape{k, l}, std::move(out), {magnitude, phase},
      [k, f, l](detail::TensorNode<S>& nd) {
        auto& mp = *nd.parents[0];
        auto& pp = *nd.parents[1];
        if (!mp.requires_grad && !pp.requires_grad) return;
        if (mp.requires_grad) mp.ensure_grad();
        if (pp.requires_grad) pp.ensure_grad();
        Eigen::FFT<double> fft;
        std::vector<std::complex<double>> gin(static_cast<std::size_t>(l));
        std::vector<std::complex<double>> gspec(static_cast<std::size_t>(l));
        const S* g = nd.grad.data();
        const S* m = mp.value.data();
        const S* p = pp.value.data();
        for (Index i = 0; i < k; ++i) {
          for (Index n = 0; n < l; ++n)
            gin[static_cast<std::size_t>(n)] = {static_cast<double>(g[i * l + n]), 0.0};
          fft.fwd(gspec, gin);
          for (Index b = 0; b < f; ++b) {
            const double kappa = (b == 0 || b == l / 2) ? 1.0 : 2.0;
            const double pb = static_cast<double>(p[i * f + b]);
            const std::complex<double> e =
                std::polar(1.0, pb) * std::conj(gspec[static_cast<std::size_t>(b)]);
            if (mp.requires_grad)
              mp.grad[static_cast<std::size_t>(i * f + b)] +=
                  static_cast<S>(kappa / static_cast<double>(l) * e.real());
            if (pp.requires_grad)
              pp.grad[static_cast<std::size_t>(i * f + b)] += static_cast<S>(
                  -kappa / static_cast<double>(l) * static_cast<double>(m[i * f + b]) *
                  e.imag());
          }
        }
      });
}

/// out[t] = scale[t] * sum_k frames[k, t - k*hop] * window[t - k*hop].
/// The caller owns the weighting: WOLA resynthesis passes the synthesis
/// window and 1/sum(w^2) per sample; a transposed convolution passes ones.
template <typename S>
Tensor<S> overlap_add(const Tensor<S>& frames, Index hop,
                      std::vector<double> window, std::vector<double> scale) {
  if (frames.rank() != 2) throw ShapeError("overlap_add: frames must be (K, L)");
  const Index k = frames.dim(0), l = frames.dim(1);
  if (static_cast<Index>(window.size()) != l)
    throw ShapeError("overlap_add: window length mismatch");
  const Index t_out = (k - 1) * hop + l;
  if (static_cast<Index>(scale.size()) != t_out)
    throw ShapeError("overlap_add: scale length must be (K-1)*hop + L");

  std::vector<double> acc(static_cast<std::size_t>(t_out), 0.0);
  const S* src = frames.values().data();
  for (Index i = 0; i < k; ++i)
    for (Index n = 0; n < l; ++n)
      acc[static_cast<std::size_t>(i * hop + n)] +=
          static_cast<double>(src[i * l + n]) * window[static_cast<std::size_t>(n)];
  std::vector<S> out(static_cast<std::size_t>(t_out));
  for (Index t = 0; t < t_out; ++t)
    out[static_cast<std::size_t>(t)] =
        static_cast<S>(acc[static_cast<std::size_t>(t)] * scale[static_cast<std::size_t>(t)]);

  return detail::make_op<S>(
      "overlap_add", Shape{t_out}, std::move(out), {frames},
      [k, l, hop, window = std::move(window),
       scale = std::move(scale)](detail::TensorNode<S>& nd) {
        auto& fp = *nd.parents[0];
        if (!fp.requires_grad) return;
        fp.ensure_grad();
        const S* g = nd.grad.data();
        for (Index i = 0; i < k; ++i)
          for (Index n = 0; n < l; ++n)
            fp.grad[static_cast<std::size_t>(i * l + n)] += static_cast<S>(
                static_cast<double>(g[i * hop + n]) * window[static_cast<std::size_t>(n)] *
                scale[static_cast<std::size_t>(i * hop + n)]);
      });
}

/// Strided frame gather: out[k, n] = wav[k*hop + n]. Trailing samples that
/// do not fill a frame are dropped.
template <typename S>
Tensor<S> frame_signal(const Tensor<S>& wav, Index l, Index hop) {
  if (wav.rank() != 1) throw ShapeError("frame_signal: wav must be rank-1");
  if (wav.dim(0) < l)
    throw ShapeError("frame_signal: signal of " + std::to_string(wav.dim(0)) +
                     " samples is shorter than the frame of " + std::to_string(l));
  const Index k = (wav.dim(0) - l) / hop + 1;
  std::vector<S> out(static_cast<std::size_t>(k * l));
  const S* x = wav.values().data();
  for (Index i = 0; i < k; ++i)
    for (Index n = 0; n < l; ++n)
      out[static_cast<std::size_t>(i * l + n)] = x[i * hop + n];
  return detail::make_op<S>(
      "frame_signal", Shape{k, l}, std::move(out), {wav},
      [k, l, hop](detail::TensorNode<S>& nd) {
        auto& wp = *nd.parents[0];
        if (!wp.requires_grad) return;
        wp.ensure_grad();
        const S* g = nd.grad.data();
        for (Index i = 0; i < k; ++i)
          for (Index n = 0; n < l; ++n)
            wp.grad[static_cast<std::size_t>(i * hop + n)] += g[i * l + n];
      });
}

/// WOLA resynthesis: per-frame inverse FFT, synthesis window, overlap-add,
/// and per-sample normalization by the window-square sum. Reconstruction is
/// exact wherever that sum is nonzero; samples with no window support
/// (sample 0 under a periodic Hann) come out as zero.
template <typename S>
Tensor<S> istft_synthesize(const StftConfig& cfg, const Tensor<S>& magnitude,
                           const Tensor<S>& phase) {
  const Index l = cfg.win_len(), hop = cfg.hop_len();
  auto frames = synth_frames(magnitude, phase, l);
  const Index k = frames.dim(0);
  const auto win = detail::hann_window(l);
  const Index t_out = (k - 1) * hop + l;
  std::vector<double> denom(static_cast<std::size_t>(t_out), 0.0);
  for (Index i = 0; i < k; ++i)
    for (Index n = 0; n < l; ++n)
      denom[static_cast<std::size_t>(i * hop + n)] +=
          win[static_cast<std::size_t>(n)] * win[static_cast<std::size_t>(n)];
  std::vector<double> scale(static_cast<std::size_t>(t_out));
  for (Index t = 0; t < t_out; ++t)
    scale[static_cast<std::size_t>(t)] =
        denom[static_cast<std::size_t>(t)] > 1e-12 ? 1.0 / denom[static_cast<std::size_t>(t)] : 0.0;
  return overlap_add(frames, hop, win, std::move(scale));
}

}  // namespace sep
