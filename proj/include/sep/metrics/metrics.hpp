#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sep/numcore/tensor.hpp"
#include "sep/training/loss.hpp"

namespace sep {

namespace detail {

template <typename S>
std::vector<double> zero_mean(const Tensor<S>& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  double mean = 0.0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(out.size());
  for (auto& v : out) v -= mean;
  return out;
}

inline double clamp_db(double db) { return std::clamp(db, -60.0, 60.0); }

}  // namespace detail

/// Scale-invariant SDR in dB: the estimate is projected onto the (zero-mean)
/// reference and the projection-to-residual energy ratio is reported,
/// clamped to +-60 dB so perfect reconstructions stay finite.
template <typename S>
double si_sdr(const Tensor<S>& est, const Tensor<S>& ref) {
  if (est.rank() != 1 || ref.rank() != 1 || est.shape() != ref.shape())
    throw ShapeError("si_sdr: estimate " + shape_str(est.shape()) + " vs reference " +
                     shape_str(ref.shape()));
  const auto e = detail::zero_mean(est);
  const auto r = detail::zero_mean(ref);
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    dot += e[i] * r[i];
    ref_energy += r[i] * r[i];
  }
  if (ref_energy == 0.0) throw NumericError("si_sdr: reference has no energy");

  const double c = dot / ref_energy;
  double target_energy = 0.0, resid_energy = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double t = c * r[i];
    target_energy += t * t;
    const double d = e[i] - t;
    resid_energy += d * d;
  }
  if (target_energy == 0.0) return -60.0;
  if (resid_energy == 0.0) return 60.0;
  return detail::clamp_db(10.0 * std::log10(target_energy / resid_energy));
}

/// Plain energy-ratio SNR in dB (no projection, no allowed distortion
/// filter), clamped to +-60 dB. Deliberately not scale invariant.
template <typename S>
double sdr(const Tensor<S>& est, const Tensor<S>& ref) {
  if (est.rank() != 1 || ref.rank() != 1 || est.shape() != ref.shape())
    throw ShapeError("sdr: estimate " + shape_str(est.shape()) + " vs reference " +
                     shape_str(ref.shape()));
  double ref_energy = 0.0, err_energy = 0.0;
  for (std::size_t i = 0; i < ref.values().size(); ++i) {
    const double r = static_cast<double>(ref.values()[i]);
    const double d = r - static_cast<double>(est.values()[i]);
    ref_energy += r * r;
    err_energy += d * d;
  }
  if (ref_energy == 0.0) throw NumericError("sdr: reference has no energy");
  if (err_energy == 0.0) return 60.0;
  return detail::clamp_db(10.0 * std::log10(ref_energy / err_energy));
}

struct UtteranceEval {
  std::vector<Index> perm;      // perm[i] = reference assigned to estimate i
  std::vector<double> si_sdr;   // per reference source, best permutation
  std::vector<double> sdr;
  std::vector<double> si_sdri;  // improvement over mixture-as-estimate
  std::vector<double> sdri;
};

/// Best-permutation metrics for one utterance. The permutation maximizes the
/// mean SI-SDR; improvements subtract the mixture-as-estimate baseline per
/// source, so an estimator that returns the mixture scores exactly zero.
template <typename S>
UtteranceEval evaluate_utterance(const std::vector<Tensor<S>>& ests,
                                 const Tensor<S>& mixture,
                                 const std::vector<Tensor<S>>& refs) {
  if (ests.size() != refs.size())
    throw ShapeError("evaluate_utterance: " + std::to_string(ests.size()) +
                     " estimates vs " + std::to_string(refs.size()) + " references");
  const auto n = ests.size();
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i][j] = -si_sdr(ests[i], refs[j]);
  auto assign = pit_assign(cost);

  UtteranceEval out;
  out.perm = assign.perm;
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(assign.perm[i]);
    const double si = si_sdr(ests[i], refs[j]);
    const double sd = sdr(ests[i], refs[j]);
    out.si_sdr.push_back(si);
    out.sdr.push_back(sd);
    out.si_sdri.push_back(si - si_sdr(mixture, refs[j]));
    out.sdri.push_back(sd - sdr(mixture, refs[j]));
  }
  return out;
}

struct EvalReport {
  std::vector<UtteranceEval> utterances;
  double mean_si_sdr = 0.0;
  double mean_sdr = 0.0;
  double mean_si_sdri = 0.0;
  double mean_sdri = 0.0;
  Index count = 0;
};

namespace detail {

inline void finalize_report(EvalReport& rep) {
  double si = 0.0, sd = 0.0, sii = 0.0, sdi = 0.0;
  std::size_t n = 0;
  for (const auto& u : rep.utterances)
    for (std::size_t i = 0; i < u.si_sdr.size(); ++i) {
      si += u.si_sdr[i];
      sd += u.sdr[i];
      sii += u.si_sdri[i];
      sdi += u.sdri[i];
      ++n;
    }
  rep.mean_si_sdr = si / static_cast<double>(n);
  rep.mean_sdr = sd / static_cast<double>(n);
  rep.mean_si_sdri = sii / static_cast<double>(n);
  rep.mean_sdri = sdi / static_cast<double>(n);
  rep.count = static_cast<Index>(rep.utterances.size());
}

}  // namespace detail

/// One JSON record per utterance, then a summary record. The energy-ratio
/// metric is reported as "snr_sdr" to be explicit about the substitution
/// for the filtered BSS-eval variant.
inline void write_eval_report(const std::string& path, const EvalReport& rep) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ShapeError("cannot write report '" + path + "'");
  for (std::size_t i = 0; i < rep.utterances.size(); ++i) {
    const auto& u = rep.utterances[i];
    nlohmann::json j{{"utterance", i},     {"perm", u.perm},
                     {"si_sdr", u.si_sdr}, {"snr_sdr", u.sdr},
                     {"si_sdri", u.si_sdri}, {"snr_sdri", u.sdri}};
    f << j.dump() << "\n";
  }
  nlohmann::json s{{"summary", true},
                   {"count", rep.count},
                   {"mean_si_sdr", rep.mean_si_sdr},
                   {"mean_snr_sdr", rep.mean_sdr},
                   {"mean_si_sdri", rep.mean_si_sdri},
                   {"mean_snr_sdri", rep.mean_sdri}};
  f << s.dump() << "\n";
}

}  // namespace sep
