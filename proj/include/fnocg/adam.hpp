#pragma once

#include "fnocg/operator_net.hpp"

#include <cmath>
#include <span>

namespace fnocg {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update on flat arrays; `step` is the 1-based
/// index of this update.
inline void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                        std::span<double> v, long step, double lr, const AdamSettings& s = {}) {
  require(params.size() == grads.size() && params.size() == m.size() && params.size() == v.size(),
          "adam_update: shape mismatch");
  require(step >= 1, "adam_update: step must be >= 1");
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grads[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps);
  }
}

/// First and second moments for every FNO tensor.
struct AdamState {
  FnoParams m;
  FnoParams v;
  long step = 0;
  AdamSettings settings;

  explicit AdamState(const FnoConfig& c) : m(FnoParams::zeros(c)), v(FnoParams::zeros(c)) {}
};

/// Applies one Adam step. A gradient containing non-finite values is
/// rejected: parameters and state are left untouched and false is returned.
inline bool adam_step(FnoParams& params, const FnoParams& grads, AdamState& state, double lr) {
  if (!grads.all_finite()) return false;
  auto pt = params.tensors();
  auto gt = const_cast<FnoParams&>(grads).tensors();
  auto mt = state.m.tensors();
  auto vt = state.v.tensors();
  require(pt.size() == gt.size() && pt.size() == mt.size() && pt.size() == vt.size(), "adam_step: layout mismatch");
  ++state.step;
  for (std::size_t i = 0; i < pt.size(); ++i) {
    adam_update(pt[i].data, gt[i].data, mt[i].data, vt[i].data, state.step, lr, state.settings);
  }
  return true;
}

}  // namespace fnocg
