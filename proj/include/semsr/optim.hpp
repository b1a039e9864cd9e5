#pragma once

#include <cmath>
#include <string>

#include "semsr/layers.hpp"

namespace semsr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// lr0 * 0.5^floor(step / interval).
inline double step_decay_lr(double lr0, long step, long interval) {
  if (interval <= 0) throw ConfigError("learning-rate decay interval must be positive");
  return lr0 * std::ldexp(1.0, -int(step / interval));
}

/// Adam with bias correction. Moment tensors are kept by parameter name so
/// they can be checkpointed alongside the parameters.
template <typename Scalar>
class Adam {
 public:
  Adam(NamedVars<Scalar> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& [name, p] : params_) {
      m_.emplace_back(name, Var<Scalar>(Tensor<Scalar>(p.shape())));
      v_.emplace_back(name, Var<Scalar>(Tensor<Scalar>(p.shape())));
    }
  }

  void zero_grad() { semsr::zero_grad(params_); }

  /// One update with learning rate `lr`. Parameters without an accumulated
  /// gradient are treated as having zero gradient.
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
    const Scalar step_size = Scalar(lr / bc1);
    const Scalar inv_sqrt_bc2 = Scalar(1.0 / std::sqrt(bc2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].second;
      if (!p.requires_grad()) continue;
      auto& m = m_[i].second.value_mut().array();
      auto& v = v_[i].second.value_mut().array();
      if (p.has_grad()) {
        const auto& g = p.grad().array();
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.square();
      } else {
        m *= b1;
        v *= b2;
      }
      p.value_mut().array() -= step_size * m / (v.sqrt() * inv_sqrt_bc2 + Scalar(cfg_.eps));
    }
  }

  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  const NamedVars<Scalar>& parameters() const { return params_; }

  /// Moments as named tensors ("m/<param>", "v/<param>").
  NamedVars<Scalar> state() const {
    NamedVars<Scalar> s;
    for (const auto& [name, m] : m_) s.emplace_back("m/" + name, m);
    for (const auto& [name, v] : v_) s.emplace_back("v/" + name, v);
    return s;
  }

 private:
  NamedVars<Scalar> params_;
  NamedVars<Scalar> m_;
  NamedVars<Scalar> v_;
  AdamConfig cfg_;
  long t_ = 0;
};

}  // namespace semsr
