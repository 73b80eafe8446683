#pragma once

#include <cmath>

#include "errl/types.hpp"

namespace errl {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamState {
  VecX<S> m, v;
  long t = 0;

  void reset(Eigen::Index size) {
    m = VecX<S>::Zero(size);
    v = VecX<S>::Zero(size);
    t = 0;
  }
};

// Scales `grad` so its l2 norm is at most max_norm; returns the pre-clip norm.
template <typename S>
double clip_global_norm(VecX<S>& grad, double max_norm) {
  const double norm = std::sqrt(static_cast<double>(grad.squaredNorm()));
  if (norm > max_norm && norm > 0.0) grad *= static_cast<S>(max_norm / norm);
  return norm;
}

// One descent step; lr_scale multiplies cfg.lr (decay schedules).
template <typename S>
void adam_update(VecX<S>& params, const VecX<S>& grad, AdamState<S>& state,
                 const AdamConfig& cfg, double lr_scale = 1.0) {
  if (state.m.size() != params.size()) state.reset(params.size());
  ++state.t;
  const S b1 = static_cast<S>(cfg.beta1);
  const S b2 = static_cast<S>(cfg.beta2);
  state.m = b1 * state.m + (S(1) - b1) * grad;
  state.v = b2 * state.v + (S(1) - b2) * grad.cwiseProduct(grad);
  const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const S step = static_cast<S>(cfg.lr * lr_scale * std::sqrt(corr2) / corr1);
  const S eps = static_cast<S>(cfg.eps);
  params.array() -=
      step * state.m.array() / (state.v.array().sqrt() + eps * static_cast<S>(std::sqrt(corr2)));
}

}  // namespace errl
