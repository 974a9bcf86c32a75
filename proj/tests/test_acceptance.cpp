// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Everything runs single-threaded from fixed seeds.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sep/datagen/synth.hpp"
#include "sep/metrics/evaluate.hpp"
#include "sep/models/checkpoint.hpp"
#include "sep/numcore/grad_check.hpp"
#include "sep/training/optimizer.hpp"

namespace {

using D = double;
using TD = sep::Tensor<double>;
using TF = sep::Tensor<float>;

template <typename S>
sep::Tensor<S> randt(sep::Rng& rng, sep::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<S> v(static_cast<std::size_t>(sep::shape_size(shape)));
  for (auto& x : v) x = static_cast<S>(rng.uniform(lo, hi));
  return sep::Tensor<S>::from_data(std::move(shape), std::move(v));
}

template <typename S>
sep::Tensor<S> clone(const sep::Tensor<S>& t) {
  return sep::Tensor<S>::from_data(t.shape(),
                                   std::vector<S>(t.values().begin(), t.values().end()));
}

template <typename S>
bool bitwise_equal(const sep::Tensor<S>& a, const sep::Tensor<S>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    if (a.values()[i] != b.values()[i]) return false;
  return true;
}

template <typename S>
double max_abs_diff(const sep::Tensor<S>& a, const sep::Tensor<S>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.values()[i]) -
                                     static_cast<double>(b.values()[i])));
  return worst;
}

std::string fmt_g(double v) {
  char b[32];
  std::snprintf(b, sizeof(b), "%.3g", v);
  return b;
}

/// Noise-free two-speaker toy set with widely separated harmonic bands:
/// learnable by very small models, mixture == ref1 + ref2 exactly. Edges are
/// faded to silence so spectral resynthesis edge effects (where the window
/// overlap normalization has little support) cannot dominate waveform losses.
template <typename S>
std::vector<sep::Utterance<S>> toy_set(int n, sep::Index samples, double rate,
                                       std::uint64_t seed, sep::Index quiet = 320,
                                       sep::Index ramp = 64) {
  sep::SynthSpeakerSpec a;
  a.f0_lo_hz = 400.0;
  a.f0_hi_hz = 500.0;
  a.n_harmonics = 2;
  a.pause_prob = 0.0;
  a.envelope_rate_hz = 1.5;
  sep::SynthSpeakerSpec b;
  b.f0_lo_hz = 1400.0;
  b.f0_hi_hz = 1700.0;
  b.n_harmonics = 2;
  b.pause_prob = 0.0;
  b.envelope_rate_hz = 2.5;

  sep::Rng rng(seed);
  std::vector<sep::Utterance<S>> out;
  for (int i = 0; i < n; ++i) {
    sep::Utterance<S> u;
    u.refs.push_back(sep::synth_speaker_samples<S>(a, samples, rate, rng));
    u.refs.push_back(sep::synth_speaker_samples<S>(b, samples, rate, rng));
    for (auto& r : u.refs)
      for (sep::Index t = 0; t < samples; ++t) {
        const sep::Index d = std::min(t, samples - 1 - t);
        const double g = d < quiet ? 0.0
                         : ramp > 0 && d < quiet + ramp
                             ? static_cast<double>(d - quiet) / static_cast<double>(ramp)
                             : 1.0;
        r.values_mut()[static_cast<std::size_t>(t)] *= static_cast<S>(g);
      }
    std::vector<S> mix(static_cast<std::size_t>(samples));
    for (std::size_t t = 0; t < mix.size(); ++t)
      mix[t] = u.refs[0].values()[t] + u.refs[1].values()[t];
    u.mixture = sep::Tensor<S>::from_data({samples}, std::move(mix));
    out.push_back(std::move(u));
  }
  return out;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "sepkit_acceptance" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// --- tiny model configs shared by several criteria -------------------------

sep::TdModelConfig toy_td_cfg(sep::Scheme scheme) {
  sep::TdModelConfig c;
  c.n_blocks = 1;
  c.hidden = 16;
  c.n_kernels = 16;
  c.kernel_len = 16;
  c.chunk = 10;
  c.scheme = scheme;
  return c;
}

sep::FdModelConfig toy_fd_cfg(sep::Scheme scheme, const sep::StftConfig& stft) {
  sep::FdModelConfig c;
  c.n_layers = 2;
  c.hidden = 32;
  c.n_bins = stft.n_bins();
  c.scheme = scheme;
  return c;
}

}  // namespace

int main() {
  const auto t_start = std::chrono::steady_clock::now();
  int passed = 0, total = 0;
  auto criterion = [&](int id, const std::string& name,
                       const std::function<bool(std::string&)>& fn) {
    ++total;
    std::string note;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ok = fn(note);
    } catch (const std::exception& e) {
      note = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d. %-58s %7.2fs  %s\n", ok ? "PASS" : "FAIL", id, name.c_str(),
                secs, note.c_str());
    std::fflush(stdout);
    if (ok) ++passed;
  };

  // -------------------------------------------------------------------------
  criterion(1, "gradient suite: layers, blocks, codecs, end-to-end", [](std::string& note) {
    const auto t0 = std::chrono::steady_clock::now();
    sep::Rng rng(201);
    double worst_layer = 0.0, worst_e2e = 0.0;
    bool ok = true;
    auto layer = [&](const sep::GradCheckResult& r) {
      worst_layer = std::max(worst_layer, r.max_rel_err);
      ok = ok && r.ok(1e-4);
    };

    {  // fully connected + both norms
      auto x = randt<D>(rng, {6, 4});
      auto fc = sep::FcParams<D>::init(4, 3, rng);
      auto w = randt<D>(rng, {6, 3});
      layer(sep::grad_check<D>(
          [&] { return sep::sum(sep::mul(sep::fc_forward(fc, x), w)); },
          {x, fc.weight, fc.bias}));
      auto nrm = sep::NormParams<D>::init(4);
      auto w2 = randt<D>(rng, {6, 4});
      layer(sep::grad_check<D>(
          [&] { return sep::sum(sep::mul(sep::cln_forward(nrm, x), w2)); },
          {x, nrm.gamma, nrm.beta}));
      layer(sep::grad_check<D>(
          [&] { return sep::sum(sep::mul(sep::gln_forward(nrm, x), w2)); },
          {x, nrm.gamma, nrm.beta}));
    }
    {  // bidirectional recurrence
      auto x = randt<D>(rng, {5, 3});
      auto pf = sep::LstmParams<D>::init(3, 2, rng);
      auto pb = sep::LstmParams<D>::init(3, 2, rng);
      auto w = randt<D>(rng, {5, 4});
      layer(sep::grad_check<D>(
          [&] { return sep::sum(sep::mul(sep::bilstm_forward(pf, pb, x), w)); },
          {x, pf.w, pf.u, pf.b, pb.w, pb.u, pb.b}));
    }
    for (auto scheme : {sep::Scheme::Standard, sep::Scheme::Decomposed,
                        sep::Scheme::Reorganized})
      for (auto path : {sep::Path::Offline, sep::Path::Online}) {
        if (scheme == sep::Scheme::Standard && path == sep::Path::Online) continue;
        auto p = sep::DualBlockParams<D>::init(scheme, 4, 3, sep::NormKind::Cln, rng);
        auto x = randt<D>(rng, {6, 4});
        auto w = randt<D>(rng, {6, 4});
        std::vector<TD> inputs{x, p.rnn1.w, p.rnn1.u, p.rnn1.b, p.fc_offline.weight,
                               p.norm.gamma, p.norm.beta};
        if (scheme != sep::Scheme::Decomposed) inputs.push_back(p.rnn2.w);
        if (scheme == sep::Scheme::Decomposed && path == sep::Path::Online) {
          inputs.push_back(p.fc_online.weight);
          inputs.push_back(p.fc_online.bias);
        }
        layer(sep::grad_check<D>(
            [&] { return sep::sum(sep::mul(sep::dual_block_forward(p, x, path), w)); },
            inputs));
      }
    for (auto path : {sep::Path::Offline, sep::Path::Online}) {  // dual-path block
      auto p = sep::DprnnBlockParams<D>::init(sep::Scheme::Reorganized, 4, 3, rng);
      auto x = randt<D>(rng, {12, 4});
      auto w = randt<D>(rng, {12, 4});
      layer(sep::grad_check<D>(
          [&] {
            auto cf = sep::chunk_split(x, 4, 2);
            cf = sep::dprnn_block_forward(p, cf, path);
            return sep::sum(sep::mul(sep::chunk_merge(cf), w));
          },
          {x, p.intra.rnn1.w, p.intra.fc_offline.weight, p.inter.rnn2.w,
           p.inter.fc_offline.weight, p.inter.norm.gamma}));
    }
    {  // learned codec and chunking
      auto p = sep::ConvCodecParams<D>::init(8, 5, rng);
      auto x = randt<D>(rng, {48});
      auto w = randt<D>(rng, {48});
      layer(sep::grad_check<D>(
          [&] {
            return sep::sum(sep::mul(
                sep::fit_length(sep::conv_decode(p, sep::conv_encode(p, x)), 48), w));
          },
          {x, p.encoder, p.decoder}));
      auto f = randt<D>(rng, {10, 3});
      auto wf = randt<D>(rng, {10, 3});
      layer(sep::grad_check<D>(
          [&] { return sep::sum(sep::mul(sep::chunk_merge(sep::chunk_split(f, 4, 2)), wf)); },
          {f}));
    }
    {  // synthesis half of the spectral codec (analysis feeds it plain data)
      const sep::StftConfig cfg{1000.0, 16.0, 8.0};
      auto x = randt<D>(rng, {64});
      sep::Spectrogram<D> sp;
      {
        sep::NoGradGuard ng;
        sp = sep::stft_analyze(cfg, x);
      }
      auto mag = clone(sp.magnitude);
      auto w = randt<D>(rng, {64});
      layer(sep::grad_check<D>(
          [&] {
            return sep::sum(sep::mul(
                sep::fit_length(sep::istft_synthesize(cfg, mag, sp.phase), 64), w));
          },
          {mag}));
    }

    // end-to-end tiny models, both paths, every parameter
    {
      const sep::StftConfig stft{1000.0, 16.0, 8.0};
      sep::FdModelConfig fc;
      fc.n_layers = 2;
      fc.hidden = 2;
      fc.n_bins = stft.n_bins();
      fc.scheme = sep::Scheme::Decomposed;
      auto m = sep::FdModel<D>::init(fc, stft, rng);
      auto wav = randt<D>(rng, {72});
      for (auto path : {sep::Path::Offline, sep::Path::Online}) {
        auto w0 = randt<D>(rng, {72});
        auto w1 = randt<D>(rng, {72});
        // The input waveform is excluded: the analysis stage feeds the
        // network plain data by design, so no gradient flows to the mixture.
        std::vector<TD> inputs;
        for (auto& np : m.named_parameters()) inputs.push_back(np.tensor);
        auto r = sep::grad_check<D>(
            [&] {
              auto outs = sep::fd_forward(m, wav, path);
              return sep::add(sep::sum(sep::mul(outs[0], w0)),
                              sep::sum(sep::mul(outs[1], w1)));
            },
            inputs);
        worst_e2e = std::max(worst_e2e, r.max_rel_err);
        ok = ok && r.ok(1e-3);
      }
    }
    {
      sep::TdModelConfig tc;
      tc.n_blocks = 1;
      tc.hidden = 2;
      tc.n_kernels = 4;
      tc.kernel_len = 8;
      tc.chunk = 4;
      tc.scheme = sep::Scheme::Reorganized;
      auto m = sep::TdModel<D>::init(tc, rng);
      auto wav = randt<D>(rng, {44});
      for (auto path : {sep::Path::Offline, sep::Path::Online}) {
        auto w0 = randt<D>(rng, {44});
        auto w1 = randt<D>(rng, {44});
        std::vector<TD> inputs{wav};
        for (auto& np : m.named_parameters()) inputs.push_back(np.tensor);
        auto r = sep::grad_check<D>(
            [&] {
              auto outs = sep::td_forward(m, wav, path);
              return sep::add(sep::sum(sep::mul(outs[0], w0)),
                              sep::sum(sep::mul(outs[1], w1)));
            },
            inputs);
        worst_e2e = std::max(worst_e2e, r.max_rel_err);
        ok = ok && r.ok(1e-3);
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    note = "max rel err " + fmt_g(worst_layer) + " layers / " + fmt_g(worst_e2e) +
           " end-to-end, " + fmt_g(secs) + "s of 120s budget";
    return ok && secs < 120.0;
  });

  // -------------------------------------------------------------------------
  criterion(2, "cumulative norm: causality, global match, worked example",
            [](std::string& note) {
    sep::NoGradGuard ng;
    sep::Rng rng(202);
    auto f = randt<D>(rng, {24, 5});
    auto p = sep::NormParams<D>::init(5);
    const auto y = sep::cln_forward(p, f);
    auto f2 = clone(f);
    for (sep::Index i = 12 * 5; i < 24 * 5; ++i)
      f2.values_mut()[static_cast<std::size_t>(i)] = rng.uniform(-5.0, 5.0);
    const auto y2 = sep::cln_forward(p, f2);
    double causal = 0.0;
    for (sep::Index i = 0; i < 12 * 5; ++i)
      causal = std::max(causal, std::abs(y.values()[static_cast<std::size_t>(i)] -
                                         y2.values()[static_cast<std::size_t>(i)]));

    const auto g = sep::gln_forward(p, f);
    double tail = 0.0;
    for (sep::Index i = 23 * 5; i < 24 * 5; ++i)
      tail = std::max(tail, std::abs(y.values()[static_cast<std::size_t>(i)] -
                                     g.values()[static_cast<std::size_t>(i)]));

    auto p2 = sep::NormParams<D>::init(2);
    auto fx = TD::from_data({2, 2}, {1.0, 3.0, 5.0, 7.0});
    const auto yx = sep::cln_forward(p2, fx);
    const double eps = 1e-8;
    const double expect[4] = {
        (1.0 - 2.0) / std::sqrt(1.0 + eps), (3.0 - 2.0) / std::sqrt(1.0 + eps),
        (5.0 - 4.0) / std::sqrt(5.0 + eps), (7.0 - 4.0) / std::sqrt(5.0 + eps)};
    double oracle = 0.0;
    for (int i = 0; i < 4; ++i)
      oracle = std::max(oracle, std::abs(yx.values()[static_cast<std::size_t>(i)] -
                                         expect[i]));
    note = "causal " + fmt_g(causal) + ", final-frame " + fmt_g(tail) + ", oracle " +
           fmt_g(oracle);
    return causal < 1e-7 && tail < 1e-6 && oracle < 1e-6;
  });

  // -------------------------------------------------------------------------
  criterion(3, "path equivalence over 100 random configurations", [](std::string& note) {
    sep::NoGradGuard ng;
    sep::Rng rng(203);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto c = rng.uniform_int(2, 6);
      const auto h = rng.uniform_int(1, 4);
      const auto t = rng.uniform_int(3, 12);
      const auto norm = i % 3 ? sep::NormKind::Cln : sep::NormKind::Gln;
      auto x = randt<D>(rng, {t, c});
      for (auto scheme : {sep::Scheme::Decomposed, sep::Scheme::Reorganized}) {
        auto p = sep::DualBlockParams<D>::init(scheme, c, h, norm, rng);
        auto ref = p;
        ref.scheme = sep::Scheme::Standard;
        worst = std::max(
            worst, max_abs_diff(sep::dual_block_forward(p, x, sep::Path::Offline),
                                sep::dual_block_forward(ref, x, sep::Path::Offline)));
      }
    }
    note = "max abs diff " + fmt_g(worst) + " across both schemes";
    return worst < 1e-6;
  });

  // -------------------------------------------------------------------------
  criterion(4, "latency contracts: spectral window / chunk lookahead",
            [](std::string& note) {
    sep::NoGradGuard ng;
    sep::Rng rng(204);
    bool prefix_ok = true, tail_moves = false;

    const sep::StftConfig stft{8000.0, 32.0, 8.0};  // 32 ms window, 256 samples
    sep::FdModelConfig fc;
    fc.n_layers = 1;
    fc.hidden = 3;
    fc.n_bins = stft.n_bins();
    fc.scheme = sep::Scheme::Reorganized;
    auto fm = sep::FdModel<D>::init(fc, stft, rng);
    const sep::Index fd_look = sep::fd_lookahead_samples(stft);
    if (fd_look != 256) {
      note = "window lookahead is " + std::to_string(fd_look);
      return false;
    }
    {
      auto wav = randt<D>(rng, {2048});
      auto wav2 = clone(wav);
      const sep::Index t0 = 1000;
      for (sep::Index i = t0 + fd_look; i < 2048; ++i)
        wav2.values_mut()[static_cast<std::size_t>(i)] += 1.0;
      const auto o1 = sep::fd_forward(fm, wav, sep::Path::Online);
      const auto o2 = sep::fd_forward(fm, wav2, sep::Path::Online);
      for (std::size_t s = 0; s < o1.size(); ++s) {
        double tail = 0.0;
        for (sep::Index i = 0; i < 2048; ++i) {
          const double d = std::abs(o1[s].values()[static_cast<std::size_t>(i)] -
                                    o2[s].values()[static_cast<std::size_t>(i)]);
          if (i < t0)
            prefix_ok = prefix_ok && d == 0.0;
          else
            tail = std::max(tail, d);
        }
        tail_moves = tail_moves || tail > 1e-6;
      }
    }

    auto tc = toy_td_cfg(sep::Scheme::Reorganized);
    tc.hidden = 3;
    tc.n_kernels = 5;
    tc.kernel_len = 8;
    tc.chunk = 4;
    auto tm = sep::TdModel<D>::init(tc, rng);
    const sep::Index td_look = sep::td_lookahead_samples(tc);
    if (td_look != tc.chunk * tc.stride() + tc.kernel_len) {
      note = "chunk lookahead is " + std::to_string(td_look);
      return false;
    }
    {
      auto wav = randt<D>(rng, {300});
      auto wav2 = clone(wav);
      const sep::Index t0 = 100;
      for (sep::Index i = t0 + td_look; i < 300; ++i)
        wav2.values_mut()[static_cast<std::size_t>(i)] += 1.0;
      const auto o1 = sep::td_forward(tm, wav, sep::Path::Online);
      const auto o2 = sep::td_forward(tm, wav2, sep::Path::Online);
      for (std::size_t s = 0; s < o1.size(); ++s) {
        double tail = 0.0;
        for (sep::Index i = 0; i < 300; ++i) {
          const double d = std::abs(o1[s].values()[static_cast<std::size_t>(i)] -
                                    o2[s].values()[static_cast<std::size_t>(i)]);
          if (i < t0)
            prefix_ok = prefix_ok && d == 0.0;
          else
            tail = std::max(tail, d);
        }
        tail_moves = tail_moves || tail > 1e-6;
      }
    }
    note = prefix_ok ? "prefixes bit-exact beyond both lookaheads" : "prefix leaked";
    return prefix_ok && tail_moves;
  });

  // -------------------------------------------------------------------------
  criterion(5, "permutation assignment equals brute force, 1000 matrices",
            [](std::string& note) {
    sep::Rng rng(205);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto n = static_cast<std::size_t>(2 + trial % 2);
      std::vector<std::vector<double>> cost(n, std::vector<double>(n));
      for (auto& row : cost)
        for (auto& v : row) v = rng.uniform(-10.0, 10.0);
      const auto got = sep::pit_assign(cost);

      double best = std::numeric_limits<double>::infinity();
      std::vector<bool> used(n, false);
      const std::function<void(std::size_t, double)> visit = [&](std::size_t i, double acc) {
        if (i == n) {
          best = std::min(best, acc / static_cast<double>(n));
          return;
        }
        for (std::size_t j = 0; j < n; ++j) {
          if (used[j]) continue;
          used[j] = true;
          visit(i + 1, acc + cost[i][j]);
          used[j] = false;
        }
      };
      visit(0, 0.0);

      double via_perm = 0.0;  // the returned assignment must realize the minimum
      for (std::size_t i = 0; i < n; ++i)
        via_perm += cost[i][static_cast<std::size_t>(got.perm[i])];
      via_perm /= static_cast<double>(n);
      if (got.value != best || via_perm != best) {
        note = "mismatch at trial " + std::to_string(trial);
        return false;
      }
    }
    note = "exact for 2 and 3 sources";
    return true;
  });

  // -------------------------------------------------------------------------
  criterion(6, "metric invariances: scaling, mixture baseline, clamp",
            [](std::string& note) {
    sep::Rng rng(206);
    auto ref = randt<D>(rng, {256});
    auto est = randt<D>(rng, {256});
    const double base = sep::si_sdr(est, ref);
    if (!(base > -60.0 && base < 60.0)) {
      note = "probe not in the open interval";
      return false;
    }
    double scale_drift = 0.0;
    for (double a : {0.1, 1.0, 10.0}) {
      auto scaled = clone(est);
      for (auto& v : scaled.values_mut()) v *= a;
      scale_drift = std::max(scale_drift, std::abs(sep::si_sdr(scaled, ref) - base));
    }

    auto r0 = randt<D>(rng, {200});
    auto r1 = randt<D>(rng, {200});
    std::vector<double> mix(200);
    for (std::size_t i = 0; i < mix.size(); ++i)
      mix[i] = r0.values()[i] + r1.values()[i];
    auto mixture = TD::from_data({200}, std::move(mix));
    const auto base_eval =
        sep::evaluate_utterance<D>({mixture, mixture}, mixture, {r0, r1});
    bool zero_improvement = true;
    for (double v : base_eval.si_sdri) zero_improvement = zero_improvement && v == 0.0;

    const bool clamp = sep::si_sdr(ref, ref) == 60.0;
    note = "scale drift " + fmt_g(scale_drift) + ", mixture SI-SDRi " +
           (zero_improvement ? "0" : "nonzero") + ", perfect estimate " +
           (clamp ? "+60" : "unclamped");
    return scale_drift < 1e-9 && zero_improvement && clamp;
  });

  // -------------------------------------------------------------------------
  criterion(7, "codec round-trips: spectral and chunking", [](std::string& note) {
    sep::NoGradGuard ng;
    sep::Rng rng(207);
    double stft_worst = 0.0;
    const sep::StftConfig cfgs[] = {{8000.0, 32.0, 8.0}, {8000.0, 4.0, 2.0},
                                    {16000.0, 8.0, 2.0}};
    for (const auto& cfg : cfgs) {
      const sep::Index n = cfg.win_len() * 8;
      auto x = randt<D>(rng, {n});
      const auto sp = sep::stft_analyze(cfg, x);
      const auto y = sep::istft_synthesize(cfg, sp.magnitude, sp.phase);
      for (sep::Index i = cfg.win_len(); i < n - cfg.win_len(); ++i)
        stft_worst = std::max(stft_worst,
                              std::abs(x.values()[static_cast<std::size_t>(i)] -
                                       y.values()[static_cast<std::size_t>(i)]));
    }
    double chunk_worst = 0.0;
    for (auto [frames, chunk] : {std::pair<sep::Index, sep::Index>{30, 6},
                                 {17, 4}, {5, 8}}) {
      auto f = randt<D>(rng, {frames, 5});
      chunk_worst = std::max(
          chunk_worst, max_abs_diff(f, sep::chunk_merge(sep::chunk_split(f, chunk, chunk / 2))));
    }
    note = "istft-stft " + fmt_g(stft_worst) + ", merge-split " + fmt_g(chunk_worst);
    return stft_worst < 1e-6 && chunk_worst < 1e-6;
  });

  // -------------------------------------------------------------------------
  const auto toy = toy_set<float>(4, 4000, 8000.0, 301);

  criterion(8, "strategy 1: bit-exact offline init, finetune gains online",
            [&](std::string& note) {
    sep::Rng rng(208);
    auto pre = sep::TdModel<float>::init(toy_td_cfg(sep::Scheme::Standard), rng);
    sep::TrainConfig ptc;
    ptc.strategy = sep::Strategy::FromScratchOffline;
    ptc.lr0 = 2e-3;
    ptc.max_epochs = 40;
    ptc.early_stop_patience = 40;
    ptc.decay_patience_epochs = 10;
    ptc.seed = 1;
    sep::train_loop(pre, toy, toy, ptc);

    const auto dir = fresh_dir("strategy1_td");
    sep::save_checkpoint(dir, pre);
    const auto ck = sep::read_checkpoint(dir);

    bool exact = true;
    sep::Rng rng_d(1), rng_r(2);
    auto dec = sep::init_td_from_offline<float>(ck, sep::Scheme::Decomposed, rng_d);
    auto reo = sep::init_td_from_offline<float>(ck, sep::Scheme::Reorganized, rng_r);
    {
      sep::NoGradGuard ng;
      for (const auto& u : toy) {
        const auto want = sep::td_forward(pre, u.mixture, sep::Path::Offline);
        for (auto* m : {&dec, &reo}) {
          const auto got = sep::td_forward(*m, u.mixture, sep::Path::Offline);
          for (std::size_t s = 0; s < want.size(); ++s)
            exact = exact && bitwise_equal(want[s], got[s]);
        }
      }
    }
    {  // same property holds for the spectral model
      sep::Rng frng(209);
      const sep::StftConfig stft{8000.0, 32.0, 8.0};
      auto fpre = sep::FdModel<float>::init(toy_fd_cfg(sep::Scheme::Standard, stft),
                                            stft, frng);
      const auto fdir = fresh_dir("strategy1_fd");
      sep::save_checkpoint(fdir, fpre);
      const auto fck = sep::read_checkpoint(fdir);
      sep::NoGradGuard ng;
      for (auto scheme : {sep::Scheme::Decomposed, sep::Scheme::Reorganized}) {
        sep::Rng r2(3);
        auto m = sep::init_fd_from_offline<float>(fck, scheme, r2);
        const auto want = sep::fd_forward(fpre, toy[0].mixture, sep::Path::Offline);
        const auto got = sep::fd_forward(m, toy[0].mixture, sep::Path::Offline);
        for (std::size_t s = 0; s < want.size(); ++s)
          exact = exact && bitwise_equal(want[s], got[s]);
      }
    }
    if (!exact) {
      note = "offline outputs drifted after init";
      return false;
    }

    const double before = sep::evaluate(reo, toy, sep::Path::Online).mean_si_sdri;
    sep::TrainConfig ftc;
    ftc.strategy = sep::Strategy::InitFromOffline;
    ftc.lr0 = 1e-3;
    ftc.max_epochs = 20;
    ftc.early_stop_patience = 20;
    ftc.decay_patience_epochs = 5;
    ftc.seed = 2;
    sep::train_loop(reo, toy, toy, ftc);
    const double after = sep::evaluate(reo, toy, sep::Path::Online).mean_si_sdri;
    note = "online SI-SDRi " + fmt_g(before) + " -> " + fmt_g(after) + " dB after 20 epochs";
    return after > before;
  });

  // -------------------------------------------------------------------------
  criterion(9, "strategy 2: shared gradients sum, both path losses drop",
            [&](std::string& note) {
    sep::Rng rng(210);
    sep::TdModelConfig tc;
    tc.n_blocks = 1;
    tc.hidden = 3;
    tc.n_kernels = 4;
    tc.kernel_len = 8;
    tc.chunk = 4;
    tc.scheme = sep::Scheme::Reorganized;
    auto m = sep::TdModel<D>::init(tc, rng);
    auto utt = toy_set<D>(1, 96, 8000.0, 311, 0, 0)[0];

    std::vector<TD> params;
    for (auto& np : m.named_parameters()) {
      np.tensor.set_requires_grad(true);
      params.push_back(np.tensor);
    }
    auto grads = [&] {
      std::vector<std::vector<double>> out;
      for (auto& p : params) out.emplace_back(p.grad().begin(), p.grad().end());
      return out;
    };
    for (auto& p : params) p.zero_grad();
    sep::multitask_losses(m, utt, 1.0, 1.0).total.backward();
    const auto composite = grads();

    for (auto& p : params) p.zero_grad();
    sep::pit_neg_snr(sep::model_forward(m, utt.mixture, sep::Path::Offline), utt.refs)
        .loss.backward();
    sep::pit_neg_snr(sep::model_forward(m, utt.mixture, sep::Path::Online), utt.refs)
        .loss.backward();
    const auto summed = grads();

    double rel = 0.0;
    for (std::size_t i = 0; i < composite.size(); ++i)
      for (std::size_t j = 0; j < composite[i].size(); ++j) {
        const double denom =
            std::max({std::abs(composite[i][j]), std::abs(summed[i][j]), 1e-8});
        rel = std::max(rel, std::abs(composite[i][j] - summed[i][j]) / denom);
      }
    if (rel >= 1e-6) {
      note = "gradient sum mismatch, rel " + fmt_g(rel);
      return false;
    }

    sep::Rng rng_f(212);
    auto mf = sep::TdModel<float>::init(toy_td_cfg(sep::Scheme::Reorganized), rng_f);
    sep::TrainConfig mtc;
    mtc.strategy = sep::Strategy::Multitask;
    mtc.lr0 = 2e-3;
    mtc.max_epochs = 30;
    mtc.early_stop_patience = 30;
    mtc.decay_patience_epochs = 10;
    mtc.seed = 4;
    const auto res = sep::train_loop(mf, toy, toy, mtc);
    const auto& first = res.history.front();
    const auto& best = res.history.at(static_cast<std::size_t>(res.best_epoch));
    note = "grad rel " + fmt_g(rel) + "; offline " + fmt_g(first.loss_offline) + " -> " +
           fmt_g(best.loss_offline) + ", online " + fmt_g(first.loss_online) + " -> " +
           fmt_g(best.loss_online);
    return best.loss_offline < first.loss_offline && best.loss_online < first.loss_online;
  });

  // -------------------------------------------------------------------------
  criterion(10, "overfit smoke: 5 dB SI-SDRi within 500 steps", [&](std::string& note) {
    sep::TrainConfig oc;
    oc.strategy = sep::Strategy::FromScratchOffline;
    oc.lr0 = 3e-3;
    oc.batch_size = 2;           // 2 optimizer steps per epoch over 4 utterances
    oc.max_epochs = 250;         // hard cap: 500 steps
    oc.early_stop_patience = 60;
    oc.decay_patience_epochs = 20;
    oc.seed = 5;

    sep::Rng rng_t(213);
    auto td = sep::TdModel<float>::init(toy_td_cfg(sep::Scheme::Reorganized), rng_t);
    sep::train_loop(td, toy, toy, oc);
    const double td_gain = sep::evaluate(td, toy, sep::Path::Offline).mean_si_sdri;

    sep::Rng rng_f(214);
    const sep::StftConfig stft{8000.0, 32.0, 8.0};
    auto fd = sep::FdModel<float>::init(toy_fd_cfg(sep::Scheme::Reorganized, stft),
                                        stft, rng_f);
    oc.seed = 6;
    sep::train_loop(fd, toy, toy, oc);
    const double fd_gain = sep::evaluate(fd, toy, sep::Path::Offline).mean_si_sdri;

    note = "train SI-SDRi: td " + fmt_g(td_gain) + " dB, fd " + fmt_g(fd_gain) + " dB";
    return td_gain >= 5.0 && fd_gain >= 5.0;
  });

  // -------------------------------------------------------------------------
  criterion(11, "schedules: LR halving, early stop, clipped norm", [](std::string& note) {
    sep::TrainConfig cfg;
    cfg.lr0 = 0.001;

    sep::TrainSchedule lr_sched(cfg);
    lr_sched.observe_train(1.0);
    lr_sched.observe_train(1.1);
    lr_sched.observe_train(1.1);
    const bool before = lr_sched.lr == 0.001;  // two stagnant epochs: unchanged
    lr_sched.observe_train(1.1);               // third: halve
    const bool at3 = lr_sched.lr == 0.0005;

    sep::TrainSchedule stop_sched(cfg);
    stop_sched.observe_val(1.0);
    bool stopped_early = false, stopped_at15 = false;
    for (int i = 1; i <= 15; ++i) {
      stop_sched.observe_val(2.0);
      if (i < 15) stopped_early = stopped_early || stop_sched.should_stop;
      if (i == 15) stopped_at15 = stop_sched.should_stop;
    }

    sep::Rng rng(215);
    double worst_norm = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<TD> params;
      for (int k = 0; k < 3; ++k) {
        auto t = randt<D>(rng, {rng.uniform_int(1, 6), rng.uniform_int(1, 6)});
        t.set_requires_grad(true);
        t.zero_grad();
        auto g = t.grad_mut();
        const double scale = trial % 2 ? 0.1 : rng.uniform(1.0, 40.0);
        for (auto& v : g) v = rng.uniform(-1.0, 1.0) * scale;
        params.push_back(t);
      }
      sep::clip_gradients(params, 5.0);
      worst_norm = std::max(worst_norm, sep::global_grad_norm(params));
    }
    note = "lr 0.001 -> 0.0005 at the 3rd stagnant epoch, stop at the 15th, "
           "post-clip norm <= " + fmt_g(worst_norm);
    return before && at3 && !stopped_early && stopped_at15 && worst_norm <= 5.0 + 1e-6;
  });

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::printf("acceptance: %d/%d criteria passed in %.1fs\n", passed, total, secs);
  return passed == total ? 0 : 1;
}
