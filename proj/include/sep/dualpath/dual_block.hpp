#pragma once

#include <string>
#include <vector>

#include "sep/layers/fc.hpp"
#include "sep/layers/lstm.hpp"
#include "sep/layers/norm.hpp"
#include "sep/numcore/ops.hpp"
#include "sep/numcore/rng.hpp"

namespace sep {

enum class Path { Online, Offline };
enum class Scheme { Standard, Decomposed, Reorganized };

inline const char* to_string(Path p) { return p == Path::Online ? "online" : "offline"; }
inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::Standard: return "standard";
    case Scheme::Decomposed: return "decomposed";
    default: return "reorganized";
  }
}

/// One dual-mode Bi-RNN block. The two paths share every parameter except
/// fc_online, which only the decomposed scheme owns: its online path maps the
/// forward RNN state (H) to the channel width directly, while the offline
/// path and both reorganized paths go through fc_offline (2H -> N).
template <typename S>
struct DualBlockParams {
  Scheme scheme = Scheme::Standard;
  NormKind norm_kind = NormKind::Cln;
  LstmParams<S> rnn1;      // forward RNN / RNN1
  LstmParams<S> rnn2;      // backward RNN / RNN2
  FcParams<S> fc_offline;  // 2H -> N
  FcParams<S> fc_online;   // H -> N, decomposed scheme only
  NormParams<S> norm;      // shared by both paths

  Index channels() const { return fc_offline.out_dim(); }
  Index hidden() const { return rnn1.hidden_dim(); }

  static DualBlockParams init(Scheme scheme, Index n_channels, Index hidden,
                              NormKind norm_kind, Rng& rng) {
    DualBlockParams p;
    p.scheme = scheme;
    p.norm_kind = norm_kind;
    p.rnn1 = LstmParams<S>::init(n_channels, hidden, rng);
    p.rnn2 = LstmParams<S>::init(n_channels, hidden, rng);
    p.fc_offline = FcParams<S>::init(2 * hidden, n_channels, rng);
    if (scheme == Scheme::Decomposed)
      p.fc_online = FcParams<S>::init(hidden, n_channels, rng);
    p.norm = NormParams<S>::init(n_channels);
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    rnn1.collect(prefix + ".rnn1", out);
    rnn2.collect(prefix + ".rnn2", out);
    fc_offline.collect(prefix + ".fc_offline", out);
    if (scheme == Scheme::Decomposed) fc_online.collect(prefix + ".fc_online", out);
    norm.collect(prefix + ".norm", out);
  }
};

/// RNN + dimension-matching FC of one block, before normalization and the
/// residual. Factored out so the DPRNN block can pool normalization
/// statistics across chunks around the same core.
template <typename S>
Tensor<S> dual_core(const DualBlockParams<S>& p, const Tensor<S>& x, Path path) {
  if (x.rank() != 2 || x.dim(1) != p.channels())
    throw ShapeError("dual_core: input " + shape_str(x.shape()) +
                     " does not match channel dim " + std::to_string(p.channels()));
  if (path == Path::Offline || p.scheme == Scheme::Standard) {
    if (path == Path::Online)
      throw ShapeError("standard scheme has no online path");
    // All three schemes share the offline computation: forward scan, backward
    // scan, concatenate, fc_offline.
    return fc_forward(p.fc_offline,
                      bilstm_forward(p.rnn1, p.rnn2, x));
  }
  if (p.scheme == Scheme::Decomposed)
    return fc_forward(p.fc_online, lstm_sequence(p.rnn1, x, Direction::Forward));
  // Reorganized online: RNN2 consumes the original sequence (a forward scan),
  // concatenated with the RNN1 output through the shared fc_offline.
  return fc_forward(
      p.fc_offline,
      concat<S>({lstm_sequence(p.rnn1, x, Direction::Forward),
                 lstm_sequence(p.rnn2, x, Direction::Forward)},
                1));
}

template <typename S>
Tensor<S> apply_norm(const DualBlockParams<S>& p, const Tensor<S>& f) {
  return p.norm_kind == NormKind::Cln ? cln_forward(p.norm, f)
                                      : gln_forward(p.norm, f);
}

/// y = x + norm(core(x)); the residual makes zero-weight blocks identities.
template <typename S>
Tensor<S> dual_block_forward(const DualBlockParams<S>& p, const Tensor<S>& x,
                             Path path) {
  return add(x, apply_norm(p, dual_core(p, x, path)));
}

/// Sequential composition with one path selector applied at every block.
template <typename S>
Tensor<S> stack_forward(const std::vector<DualBlockParams<S>>& blocks,
                        const Tensor<S>& x, Path path) {
  Tensor<S> y = x;
  for (const auto& b : blocks) y = dual_block_forward(b, y, path);
  return y;
}

}  // namespace sep
