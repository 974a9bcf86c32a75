#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "sep/datagen/wav_io.hpp"
#include "sep/numcore/rng.hpp"
#include "sep/numcore/tensor.hpp"

namespace sep {

/// Procedural harmonic stand-in for a speaker: a sampled fundamental inside
/// the speaker's band, a handful of harmonics, a slow amplitude envelope, and
/// randomly placed pauses. Two specs with disjoint bands give a separation
/// problem that is well-posed at toy scale.
struct SynthSpeakerSpec {
  double f0_lo_hz = 100.0;
  double f0_hi_hz = 150.0;
  int n_harmonics = 6;
  double envelope_rate_hz = 3.0;  // 0 keeps the envelope constant
  double segment_ms = 250.0;      // voiced/unvoiced granularity
  double pause_prob = 0.25;
};

namespace detail {

/// Per-sample 0/1 gate from the voiced/unvoiced segmentation, slew-limited
/// over ~5 ms so segment edges do not click.
inline std::vector<double> voiced_gate(const SynthSpeakerSpec& spec, Index n,
                                       double sample_rate_hz, Rng& rng) {
  const auto seg = std::max<Index>(
      1, static_cast<Index>(std::llround(spec.segment_ms * 1e-3 * sample_rate_hz)));
  const Index n_segs = (n + seg - 1) / seg;
  std::vector<bool> voiced(static_cast<std::size_t>(n_segs));
  bool any = false;
  for (auto&& v : voiced) {
    v = rng.uniform() >= spec.pause_prob;
    any = any || v;
  }
  if (!any) voiced[0] = true;  // a speaker never vanishes entirely

  const double ramp =
      std::max(1.0, std::round(5e-3 * sample_rate_hz));  // samples per full swing
  std::vector<double> gate(static_cast<std::size_t>(n));
  double g = voiced[0] ? 1.0 : 0.0;
  for (Index t = 0; t < n; ++t) {
    const double target = voiced[static_cast<std::size_t>(t / seg)] ? 1.0 : 0.0;
    g += std::clamp(target - g, -1.0 / ramp, 1.0 / ramp);
    gate[static_cast<std::size_t>(t)] = g;
  }
  return gate;
}

}  // namespace detail

/// Sum of harmonics at a fundamental drawn from the spec's band, shaped by a
/// slow envelope and the voiced/unvoiced gate, RMS-normalized. Zero harmonics
/// give silence.
template <typename S = float>
Tensor<S> synth_speaker_samples(const SynthSpeakerSpec& spec, Index n_samples,
                                double sample_rate_hz, Rng& rng) {
  if (n_samples <= 0) throw ShapeError("synth_speaker: duration must be positive");
  std::vector<S> out(static_cast<std::size_t>(n_samples), S(0));
  if (spec.n_harmonics <= 0)
    return Tensor<S>::from_data({n_samples}, std::move(out));

  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double f0 = rng.uniform(spec.f0_lo_hz, spec.f0_hi_hz);
  int n_h = 0;  // keep every partial below Nyquist
  while (n_h < spec.n_harmonics &&
         (n_h + 1) * f0 < 0.5 * sample_rate_hz)
    ++n_h;
  std::vector<double> phase(static_cast<std::size_t>(std::max(n_h, 1)));
  for (auto& p : phase) p = rng.uniform(0.0, two_pi);
  const double env_phase = rng.uniform(0.0, two_pi);
  const auto gate = detail::voiced_gate(spec, n_samples, sample_rate_hz, rng);

  double energy = 0.0;
  std::vector<double> x(static_cast<std::size_t>(n_samples));
  for (Index t = 0; t < n_samples; ++t) {
    const double tt = static_cast<double>(t) / sample_rate_hz;
    double harm = 0.0;
    for (int h = 0; h < n_h; ++h)
      harm += std::sin(two_pi * (h + 1) * f0 * tt + phase[static_cast<std::size_t>(h)]) /
              (h + 1);
    const double env = 0.6 + 0.4 * std::sin(two_pi * spec.envelope_rate_hz * tt + env_phase);
    const double v = gate[static_cast<std::size_t>(t)] * env * harm;
    x[static_cast<std::size_t>(t)] = v;
    energy += v * v;
  }
  const double rms = std::sqrt(energy / static_cast<double>(n_samples));
  const double inv = rms > 0.0 ? 1.0 / rms : 0.0;
  for (Index t = 0; t < n_samples; ++t)
    out[static_cast<std::size_t>(t)] = static_cast<S>(x[static_cast<std::size_t>(t)] * inv);
  return Tensor<S>::from_data({n_samples}, std::move(out));
}

template <typename S = float>
Tensor<S> synth_speaker(const SynthSpeakerSpec& spec, double dur_s,
                        double sample_rate_hz, Rng& rng) {
  if (dur_s <= 0.0) throw ShapeError("synth_speaker: duration must be positive");
  return synth_speaker_samples<S>(
      spec, static_cast<Index>(std::llround(dur_s * sample_rate_hz)),
      sample_rate_hz, rng);
}

/// Sampling rules for one two-speaker noisy mixture. The default intervals
/// are the generation recipe this toolkit targets: overlap uniform over
/// [0, 1], speaker-to-speaker SNR uniform over [0, 5] dB, speech-to-noise
/// SNR uniform over [10, 20] dB. Narrow an interval to pin a parameter.
struct MixtureConfig {
  double sample_rate_hz = 8000.0;
  double dur_s = 4.0;
  SynthSpeakerSpec speaker1{.f0_lo_hz = 85.0, .f0_hi_hz = 125.0};
  SynthSpeakerSpec speaker2{.f0_lo_hz = 165.0, .f0_hi_hz = 230.0};
  double overlap_lo = 0.0, overlap_hi = 1.0;
  double speaker_snr_lo_db = 0.0, speaker_snr_hi_db = 5.0;
  double noise_snr_lo_db = 10.0, noise_snr_hi_db = 20.0;
  bool reverb = true;          // 50 ms decaying sparse FIR per source; noise stays dry
  double reverb_ms = 50.0;
  int reverb_taps = 8;

  void validate() const {
    if (sample_rate_hz <= 0.0 || dur_s <= 0.0)
      throw ShapeError("MixtureConfig: rate and duration must be positive");
    const bool disjoint = speaker1.f0_hi_hz <= speaker2.f0_lo_hz ||
                          speaker2.f0_hi_hz <= speaker1.f0_lo_hz;
    if (!disjoint)
      throw ShapeError("MixtureConfig: speaker f0 bands must be disjoint");
    if (overlap_lo < 0.0 || overlap_hi > 1.0 || overlap_lo > overlap_hi)
      throw ShapeError("MixtureConfig: overlap interval must sit inside [0, 1]");
  }
};

template <typename S = float>
struct MixtureExample {
  Tensor<S> mixture;
  std::vector<Tensor<S>> sources;  // the (reverberant) training targets
  Tensor<S> noise;                 // as added: mixture == sources[0]+sources[1]+noise
  double overlap_ratio = 0.0;
  double speaker_snr_db = 0.0;
  double noise_snr_db = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

/// Direct path plus a few random late taps with exponentially decaying
/// amplitude over the reverb length.
inline std::vector<double> reverb_fir(double sample_rate_hz, double reverb_ms,
                                      int taps, Rng& rng) {
  const auto len = std::max<Index>(
      1, static_cast<Index>(std::llround(reverb_ms * 1e-3 * sample_rate_hz)));
  std::vector<double> h(static_cast<std::size_t>(len) + 1, 0.0);
  h[0] = 1.0;
  for (int k = 0; k < taps; ++k) {
    const auto d = rng.uniform_int(1, len);
    const double amp = 0.4 * std::exp(-3.0 * static_cast<double>(d) /
                                      static_cast<double>(len));
    h[static_cast<std::size_t>(d)] += (rng.uniform() < 0.5 ? -1.0 : 1.0) * amp;
  }
  return h;
}

inline void convolve_in_place(std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (h[k] == 0.0) continue;
    for (std::size_t t = k; t < x.size(); ++t) y[t] += h[k] * x[t - k];
  }
  x = std::move(y);
}

inline double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace detail

/// One synthetic noisy two-speaker mixture. Speaker 1 occupies the head of
/// the utterance and speaker 2 the tail; the sampled overlap ratio sets how
/// much their active spans share. Sources are scaled to the sampled relative
/// SNR after (optional) reverb, noise is scaled against the summed speech,
/// and the mixture is assembled in fixed order (speaker1 + speaker2) + noise
/// so it matches the stored parts sample-exactly.
template <typename S = float>
MixtureExample<S> make_mixture(Rng& rng, const MixtureConfig& cfg) {
  cfg.validate();
  const auto total =
      static_cast<Index>(std::llround(cfg.dur_s * cfg.sample_rate_hz));
  const double r = rng.uniform(cfg.overlap_lo, cfg.overlap_hi);
  const auto active = std::min<Index>(
      total, static_cast<Index>(std::llround(static_cast<double>(total) / (2.0 - r))));
  const double spk_snr = rng.uniform(cfg.speaker_snr_lo_db, cfg.speaker_snr_hi_db);
  const double noise_snr = rng.uniform(cfg.noise_snr_lo_db, cfg.noise_snr_hi_db);

  Rng rng1 = rng.split(), rng2 = rng.split(), rng_n = rng.split();
  auto sp1 = synth_speaker_samples<double>(cfg.speaker1, active, cfg.sample_rate_hz, rng1);
  auto sp2 = synth_speaker_samples<double>(cfg.speaker2, active, cfg.sample_rate_hz, rng2);

  std::vector<double> s1(static_cast<std::size_t>(total), 0.0);
  std::vector<double> s2(static_cast<std::size_t>(total), 0.0);
  for (Index t = 0; t < active; ++t) {
    s1[static_cast<std::size_t>(t)] = sp1.values()[static_cast<std::size_t>(t)];
    s2[static_cast<std::size_t>(total - active + t)] =
        sp2.values()[static_cast<std::size_t>(t)];
  }
  if (cfg.reverb) {
    detail::convolve_in_place(
        s1, detail::reverb_fir(cfg.sample_rate_hz, cfg.reverb_ms, cfg.reverb_taps, rng1));
    detail::convolve_in_place(
        s2, detail::reverb_fir(cfg.sample_rate_hz, cfg.reverb_ms, cfg.reverb_taps, rng2));
  }

  // speaker 2 rescaled so energy(s1)/energy(s2) hits the sampled relative SNR
  const double e1 = detail::energy(s1), e2 = detail::energy(s2);
  if (e2 > 0.0) {
    const double g = std::sqrt(e1 / (e2 * std::pow(10.0, spk_snr / 10.0)));
    for (auto& v : s2) v *= g;
  }

  std::vector<double> speech(static_cast<std::size_t>(total));
  for (std::size_t t = 0; t < speech.size(); ++t) speech[t] = s1[t] + s2[t];
  std::vector<double> noise(static_cast<std::size_t>(total));
  for (auto& v : noise) v = rng_n.normal();
  const double es = detail::energy(speech), en = detail::energy(noise);
  const double gn =
      en > 0.0 ? std::sqrt(es / (en * std::pow(10.0, noise_snr / 10.0))) : 0.0;
  for (auto& v : noise) v *= gn;

  MixtureExample<S> ex;
  ex.overlap_ratio = r;
  ex.speaker_snr_db = spk_snr;
  ex.noise_snr_db = noise_snr;
  auto to_tensor = [&](const std::vector<double>& v) {
    std::vector<S> out(v.size());
    for (std::size_t t = 0; t < v.size(); ++t) out[t] = static_cast<S>(v[t]);
    return Tensor<S>::from_data({total}, std::move(out));
  };
  ex.sources.push_back(to_tensor(s1));
  ex.sources.push_back(to_tensor(s2));
  ex.noise = to_tensor(noise);
  // assemble in storage precision so mixture == sources + noise bit-exactly
  std::vector<S> mix(static_cast<std::size_t>(total));
  for (std::size_t t = 0; t < mix.size(); ++t)
    mix[t] = (ex.sources[0].values()[t] + ex.sources[1].values()[t]) +
             ex.noise.values()[t];
  ex.mixture = Tensor<S>::from_data({total}, std::move(mix));
  return ex;
}

struct DatasetConfig {
  MixtureConfig mixture;
  std::string out_dir;
  WavEncoding encoding = WavEncoding::Float32;
};

struct ManifestEntry {
  std::string split;
  Index index = 0;
  std::string mixture_path, source1_path, source2_path, noise_path;  // relative
  double overlap_ratio = 0.0;
  double speaker_snr_db = 0.0;
  double noise_snr_db = 0.0;
  std::uint64_t seed = 0;
};

/// Writes train/val/test examples as WAV files plus a line-delimited JSON
/// manifest with relative paths and sampling metadata. Each split draws from
/// its own child stream and each example from its own seed, so regenerating
/// with the same (config, seed) reproduces every file, and growing one split
/// does not disturb the others.
inline std::vector<ManifestEntry> build_dataset(const DatasetConfig& cfg,
                                                Index n_train, Index n_val,
                                                Index n_test, std::uint64_t seed) {
  namespace fs = std::filesystem;
  cfg.mixture.validate();
  if (n_train < 0 || n_val < 0 || n_test < 0)
    throw ShapeError("build_dataset: split sizes must be non-negative");
  const fs::path root(cfg.out_dir);
  fs::create_directories(root);
  const auto rate = static_cast<std::uint32_t>(std::llround(cfg.mixture.sample_rate_hz));

  Rng top(seed);
  struct Split {
    const char* name;
    Index n;
    Rng rng;
  };
  std::vector<Split> splits{{"train", n_train, top.split()},
                            {"val", n_val, top.split()},
                            {"test", n_test, top.split()}};

  std::vector<ManifestEntry> entries;
  for (auto& split : splits) {
    for (Index i = 0; i < split.n; ++i) {
      const std::uint64_t ex_seed = split.rng.next_u64();
      Rng ex_rng(ex_seed);
      auto ex = make_mixture<float>(ex_rng, cfg.mixture);
      ex.seed = ex_seed;

      char name[32];
      std::snprintf(name, sizeof(name), "ex%04lld", static_cast<long long>(i));
      const fs::path rel = fs::path(split.name) / name;
      fs::create_directories(root / rel);
      auto write = [&](const char* file, const Tensor<float>& w) {
        wav_write((root / rel / file).string(), w.values(), rate, cfg.encoding);
        return (rel / file).generic_string();
      };
      ManifestEntry e;
      e.split = split.name;
      e.index = i;
      e.mixture_path = write("mixture.wav", ex.mixture);
      e.source1_path = write("source1.wav", ex.sources[0]);
      e.source2_path = write("source2.wav", ex.sources[1]);
      e.noise_path = write("noise.wav", ex.noise);
      e.overlap_ratio = ex.overlap_ratio;
      e.speaker_snr_db = ex.speaker_snr_db;
      e.noise_snr_db = ex.noise_snr_db;
      e.seed = ex_seed;
      entries.push_back(std::move(e));
    }
  }

  std::ofstream mf(root / "manifest.jsonl", std::ios::trunc);
  if (!mf) throw ShapeError("build_dataset: cannot write manifest");
  for (const auto& e : entries) {
    nlohmann::json j{{"split", e.split},
                     {"index", e.index},
                     {"mixture", e.mixture_path},
                     {"source1", e.source1_path},
                     {"source2", e.source2_path},
                     {"noise", e.noise_path},
                     {"overlap_ratio", e.overlap_ratio},
                     {"speaker_snr_db", e.speaker_snr_db},
                     {"noise_snr_db", e.noise_snr_db},
                     {"seed", e.seed}};
    mf << j.dump() << "\n";
  }
  return entries;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw ShapeError("cannot open manifest '" + manifest_path + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.split = j.at("split").get<std::string>();
      e.index = j.at("index").get<Index>();
      e.mixture_path = j.at("mixture").get<std::string>();
      e.source1_path = j.at("source1").get<std::string>();
      e.source2_path = j.at("source2").get<std::string>();
      e.noise_path = j.at("noise").get<std::string>();
      e.overlap_ratio = j.at("overlap_ratio").get<double>();
      e.speaker_snr_db = j.at("speaker_snr_db").get<double>();
      e.noise_snr_db = j.at("noise_snr_db").get<double>();
      e.seed = j.at("seed").get<std::uint64_t>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& err) {
      throw ShapeError(std::string("malformed manifest line: ") + err.what());
    }
  }
  return entries;
}

}  // namespace sep
