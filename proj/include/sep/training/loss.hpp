#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "sep/numcore/ops.hpp"

namespace sep {

/// Negative SNR in dB between an estimate and its reference:
/// -10 log10(||ref||^2 / (||ref - est||^2 + 1e-8) + 1e-8). Lower is better;
/// a perfect estimate bottoms out near -80 dB for a unit-energy reference.
/// Deliberately not scale invariant: gain errors are penalized.
template <typename S>
Tensor<S> neg_snr_loss(const Tensor<S>& est, const Tensor<S>& ref) {
  if (est.rank() != 1 || ref.rank() != 1 || est.shape() != ref.shape())
    throw ShapeError("neg_snr_loss: estimate " + shape_str(est.shape()) +
                     " vs reference " + shape_str(ref.shape()));
  double ref_energy = 0.0;
  for (S v : ref.values()) ref_energy += static_cast<double>(v) * static_cast<double>(v);
  if (ref_energy == 0.0) throw NumericError("neg_snr_loss: reference is all zero");

  auto diff = sub(ref, est);
  auto err = sum(mul(diff, diff));
  auto ratio = add_const(div(sum(mul(ref, ref)), add_const(err, S(1e-8))), S(1e-8));
  return scale(log10_(ratio), S(-10));
}

/// Best assignment of estimates to references over all permutations of a
/// square loss matrix (losses[i][j] = cost of pairing estimate i with
/// reference j). Returns the argmin permutation and the mean cost under it.
struct PitAssignment {
  std::vector<Index> perm;  // perm[i] = reference assigned to estimate i
  double value = 0.0;       // mean pairwise loss under perm
};

inline PitAssignment pit_assign(const std::vector<std::vector<double>>& losses) {
  const auto n = losses.size();
  if (n < 1 || n > 4)
    throw ShapeError("pit_assign: supports 1 to 4 sources, got " + std::to_string(n));
  for (const auto& row : losses)
    if (row.size() != n) throw ShapeError("pit_assign: loss matrix is not square");

  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  PitAssignment best;
  best.value = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      total += losses[i][static_cast<std::size_t>(idx[i])];
    const double mean = total / static_cast<double>(n);
    if (mean < best.value) {
      best.value = mean;
      best.perm = idx;
    }
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

template <typename S>
struct PitLoss {
  Tensor<S> loss;           // scalar on the tape: mean loss under perm
  std::vector<Index> perm;  // perm[i] = reference assigned to estimate i
  double value = 0.0;
};

/// Permutation-invariant loss: evaluates `base` on every estimate/reference
/// pair, picks the permutation with the lowest mean, and assembles the tape
/// expression for that permutation only.
template <typename S>
PitLoss<S> pit_loss(
    const std::vector<Tensor<S>>& ests, const std::vector<Tensor<S>>& refs,
    const std::function<Tensor<S>(const Tensor<S>&, const Tensor<S>&)>& base) {
  if (ests.size() != refs.size())
    throw ShapeError("pit_loss: " + std::to_string(ests.size()) + " estimates vs " +
                     std::to_string(refs.size()) + " references");
  const auto n = ests.size();

  std::vector<std::vector<Tensor<S>>> pair(n, std::vector<Tensor<S>>(n));
  std::vector<std::vector<double>> values(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      pair[i][j] = base(ests[i], refs[j]);
      values[i][j] = static_cast<double>(pair[i][j].item());
    }

  auto assign = pit_assign(values);
  Tensor<S> total = pair[0][static_cast<std::size_t>(assign.perm[0])];
  for (std::size_t i = 1; i < n; ++i)
    total = add(total, pair[i][static_cast<std::size_t>(assign.perm[i])]);
  return {scale(total, S(1) / static_cast<S>(n)), std::move(assign.perm), assign.value};
}

template <typename S>
PitLoss<S> pit_neg_snr(const std::vector<Tensor<S>>& ests,
                       const std::vector<Tensor<S>>& refs) {
  return pit_loss<S>(ests, refs,
                     [](const Tensor<S>& e, const Tensor<S>& r) { return neg_snr_loss(e, r); });
}

}  // namespace sep
