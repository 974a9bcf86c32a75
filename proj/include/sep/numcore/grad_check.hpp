#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sep/numcore/tensor.hpp"

namespace sep {

struct GradCheckResult {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::string worst;  // "input 2, element 17" for the worst relative error

  bool ok(double tol) const { return max_rel_err <= tol; }
};

/// Central-difference check of reverse-mode gradients.
///
/// `fn` maps the current values of `inputs` to a scalar tensor. The analytic
/// gradient is compared element by element against (f(x+h) - f(x-h)) / 2h,
/// with error normalized by max(|analytic|, |numeric|, denom_floor).
template <typename S>
GradCheckResult grad_check(const std::function<Tensor<S>()>& fn,
                           std::vector<Tensor<S>> inputs, double h = 1e-5,
                           double denom_floor = 1e-8) {
  {
    NoGradGuard ng;
    const S once = fn().item();
    const S twice = fn().item();
    if (!(once == twice))
      throw NumericError("grad_check: fn is not deterministic");
  }
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor<S> loss = fn();
  loss.backward();

  std::vector<std::vector<S>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto vals = inputs[i].values_mut();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const S orig = vals[j];
      double fp, fm;
      {
        NoGradGuard ng;
        vals[j] = orig + static_cast<S>(h);
        fp = static_cast<double>(fn().item());
        vals[j] = orig - static_cast<S>(h);
        fm = static_cast<double>(fn().item());
        vals[j] = orig;
      }
      const double num = (fp - fm) / (2.0 * h);
      const double ana = static_cast<double>(analytic[i][j]);
      const double abs_err = std::abs(num - ana);
      const double rel_err =
          abs_err / std::max({std::abs(num), std::abs(ana), denom_floor});
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
      if (rel_err > res.max_rel_err) {
        res.max_rel_err = rel_err;
        res.worst = "input " + std::to_string(i) + ", element " + std::to_string(j) +
                    " (analytic " + std::to_string(ana) + ", numeric " +
                    std::to_string(num) + ")";
      }
    }
  }
  return res;
}

}  // namespace sep
