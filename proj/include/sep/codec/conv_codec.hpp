#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sep/codec/stft.hpp"
#include "sep/layers/norm.hpp"
#include "sep/numcore/ops.hpp"
#include "sep/numcore/rng.hpp"

namespace sep {

/// Learnable 1-D conv encoder and transposed-conv decoder bases. The stride
/// is half the kernel (2 ms kernels, 1 ms hops at the paper's rates).
template <typename S>
struct ConvCodecParams {
  Tensor<S> encoder;  // (n_kernels, kernel_len)
  Tensor<S> decoder;  // (n_kernels, kernel_len)
  Index stride = 0;

  Index kernel_len() const { return encoder.dim(1); }
  Index n_kernels() const { return encoder.dim(0); }

  static ConvCodecParams init(Index kernel_len, Index n_kernels, Rng& rng) {
    if (kernel_len < 2 || kernel_len % 2 != 0)
      throw ShapeError("conv codec: kernel length must be even and >= 2");
    if (n_kernels < 1) throw ShapeError("conv codec: need at least one kernel");
    const double bound = 1.0 / std::sqrt(static_cast<double>(kernel_len));
    auto draw = [&] {
      std::vector<S> v(static_cast<std::size_t>(n_kernels * kernel_len));
      for (auto& x : v) x = static_cast<S>(rng.uniform(-bound, bound));
      return Tensor<S>::from_data({n_kernels, kernel_len}, std::move(v));
    };
    ConvCodecParams p;
    p.encoder = draw();
    p.decoder = draw();
    p.stride = kernel_len / 2;
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    out.push_back({prefix + ".encoder", encoder});
    out.push_back({prefix + ".decoder", decoder});
  }
};

/// feat[k, c] = <wav[k*stride ..], encoder kernel c>; output (K, n_kernels).
template <typename S>
Tensor<S> conv_encode(const ConvCodecParams<S>& p, const Tensor<S>& wav) {
  return matmul(frame_signal(wav, p.kernel_len(), p.stride), transpose(p.encoder));
}

/// Transposed convolution: kernel-weighted frames overlap-added at the
/// stride. Output length (K-1)*stride + kernel_len.
template <typename S>
Tensor<S> conv_decode(const ConvCodecParams<S>& p, const Tensor<S>& feat) {
  if (feat.rank() != 2 || feat.dim(1) != p.n_kernels())
    throw ShapeError("conv_decode: feature " + shape_str(feat.shape()) +
                     " does not match " + std::to_string(p.n_kernels()) + " kernels");
  const Index l = p.kernel_len();
  const Index t_out = (feat.dim(0) - 1) * p.stride + l;
  return overlap_add(matmul(feat, p.decoder), p.stride,
                     std::vector<double>(static_cast<std::size_t>(l), 1.0),
                     std::vector<double>(static_cast<std::size_t>(t_out), 1.0));
}

/// Normalization of the encoder output: gLN offline, cLN online.
template <typename S>
Tensor<S> encoder_norm(const NormParams<S>& p, const Tensor<S>& feat, NormKind mode) {
  return mode == NormKind::Cln ? cln_forward(p, feat) : gln_forward(p, feat);
}

}  // namespace sep
