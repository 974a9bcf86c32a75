#pragma once

#include <cmath>
#include <vector>

#include "sep/numcore/tensor.hpp"

namespace sep {

template <typename S>
double global_grad_norm(const std::vector<Tensor<S>>& params) {
  double acc = 0.0;
  for (const auto& p : params)
    for (S g : p.grad()) acc += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(acc);
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the factor applied (1.0 when no clipping was needed).
template <typename S>
double clip_gradients(std::vector<Tensor<S>>& params, double max_norm = 5.0) {
  if (!(max_norm > 0.0)) throw NumericError("clip_gradients: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return 1.0;
  const double factor = max_norm / norm;
  for (auto& p : params)
    for (S& g : p.grad_mut()) g = static_cast<S>(static_cast<double>(g) * factor);
  return factor;
}

/// Adam with bias correction. Moment accumulators are kept in double so the
/// update stays well conditioned even for float parameters.
template <typename S>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor<S>> params, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.values().size(), 0.0);
      v_.emplace_back(p.values().size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto vals = params_[i].values_mut();
      const auto grads = params_[i].grad();
      for (std::size_t j = 0; j < vals.size(); ++j) {
        const double g = static_cast<double>(grads[j]);
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
        const double m_hat = m_[i][j] / bc1;
        const double v_hat = v_[i][j] / bc2;
        vals[j] = static_cast<S>(static_cast<double>(vals[j]) -
                                 lr * m_hat / (std::sqrt(v_hat) + eps_));
      }
    }
  }

  Index step_count() const { return t_; }
  std::vector<Tensor<S>>& params() { return params_; }

 private:
  std::vector<Tensor<S>> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  Index t_ = 0;
};

}  // namespace sep
