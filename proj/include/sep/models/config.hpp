#pragma once

#include <string>

#include "sep/dualpath/dual_block.hpp"
#include "sep/numcore/tensor.hpp"

namespace sep {

/// Frequency-domain separator: stacked Bi-LSTM dual blocks over STFT
/// magnitudes. `n_bins` must match the analysis window of the codec the
/// model is built against.
struct FdModelConfig {
  Index n_layers = 4;
  Index hidden = 256;
  Index n_bins = 129;
  Index n_speakers = 2;
  Scheme scheme = Scheme::Reorganized;

  void validate() const {
    if (n_layers < 1) throw ShapeError("FdModelConfig: n_layers must be >= 1");
    if (hidden < 1) throw ShapeError("FdModelConfig: hidden must be >= 1");
    if (n_bins < 1) throw ShapeError("FdModelConfig: n_bins must be >= 1");
    if (n_speakers < 1 || n_speakers > 4)
      throw ShapeError("FdModelConfig: n_speakers must be in [1, 4]");
  }
};

/// Time-domain separator: learned conv codec plus chunked dual-path blocks.
/// `kernel_len` is the encoder window in samples (2 ms at 8 kHz by default);
/// the frame stride is kernel_len / 2 and the chunk hop is chunk / 2.
struct TdModelConfig {
  Index n_blocks = 6;
  Index hidden = 128;
  Index n_kernels = 64;
  Index kernel_len = 16;
  Index chunk = 100;
  Index n_speakers = 2;
  Scheme scheme = Scheme::Reorganized;

  Index stride() const { return kernel_len / 2; }
  Index chunk_hop() const { return chunk / 2; }

  void validate() const {
    if (n_blocks < 1) throw ShapeError("TdModelConfig: n_blocks must be >= 1");
    if (hidden < 1) throw ShapeError("TdModelConfig: hidden must be >= 1");
    if (n_kernels < 1) throw ShapeError("TdModelConfig: n_kernels must be >= 1");
    if (kernel_len < 2 || kernel_len % 2 != 0)
      throw ShapeError("TdModelConfig: kernel_len must be even and >= 2");
    if (chunk < 2 || chunk % 2 != 0)
      throw ShapeError("TdModelConfig: chunk must be even and >= 2");
    if (n_speakers < 1 || n_speakers > 4)
      throw ShapeError("TdModelConfig: n_speakers must be in [1, 4]");
  }
};

inline Scheme parse_scheme(const std::string& s) {
  if (s == "standard") return Scheme::Standard;
  if (s == "decomposed") return Scheme::Decomposed;
  if (s == "reorganized") return Scheme::Reorganized;
  throw ShapeError("unknown scheme '" + s + "' (expected standard|decomposed|reorganized)");
}

inline Path parse_path(const std::string& s) {
  if (s == "online") return Path::Online;
  if (s == "offline") return Path::Offline;
  throw ShapeError("unknown path '" + s + "' (expected online|offline)");
}

}  // namespace sep
