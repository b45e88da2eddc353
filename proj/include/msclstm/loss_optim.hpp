#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msclstm/errors.hpp"
#include "msclstm/layers.hpp"
#include "msclstm/tensor.hpp"

namespace msclstm {

inline constexpr double kBceEpsilon = 1e-7;

struct BceResult {
  double loss;
  double dloss_dp;
};

/// Binary cross-entropy on p clamped to [eps, 1 - eps]. The gradient is taken
/// at the clamped value.
inline BceResult bce_loss(double p, int y) {
  if (y != 0 && y != 1) {
    throw ValidationError("bce_loss: label must be 0 or 1, got " + std::to_string(y));
  }
  const double pc = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
  const double loss = y == 1 ? -std::log(pc) : -std::log(1.0 - pc);
  return {loss, (pc - y) / (pc * (1.0 - pc))};
}

/// Mean BCE over a batch; gradients are w.r.t. each p and include the 1/N.
inline double bce_mean_loss(std::span<const double> p, std::span<const int> y,
                            std::vector<double>* grads = nullptr) {
  if (p.size() != y.size() || p.empty()) {
    throw ValidationError("bce_mean_loss: need equal, non-empty probability and label vectors");
  }
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  if (grads) grads->assign(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const BceResult r = bce_loss(p[i], y[i]);
    total += r.loss;
    if (grads) (*grads)[i] = r.dloss_dp / n;
  }
  return total / n;
}

template <typename Real>
struct Moments {
  Tensor<Real> first;
  Tensor<Real> second;
};

/// Adam state for one training run. Moments are created lazily per weight.
template <typename Real>
struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  std::map<std::string, Moments<Real>> moments;
};

/// One bias-corrected Adam update over every trainable layer. Gradients are
/// looked up by full weight name ("<layer>.<weight>").
template <typename Real>
void adam_step(OptimizerState<Real>& state, std::vector<LayerParams<Real>>& layers,
               const GradientSet<Real>& grads) {
  if (state.learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const Real b1 = static_cast<Real>(state.beta1), b2 = static_cast<Real>(state.beta2);

  for (auto& layer : layers) {
    if (!layer.trainable) continue;
    for (auto& w : layer.weights) {
      const std::string key = layer.name + "." + w.name;
      const Tensor<Real>* g = grads.find(key);
      if (!g) throw UsageError("adam_step: missing gradient for trainable weight '" + key + "'");
      if (g->shape() != w.value.shape()) {
        throw DimensionError("adam_step: gradient " + shape_string(g->shape()) +
                             " does not match weight '" + key + "' " +
                             shape_string(w.value.shape()));
      }
      auto [it, inserted] = state.moments.try_emplace(key);
      if (inserted) {
        it->second.first = Tensor<Real>(w.value.shape());
        it->second.second = Tensor<Real>(w.value.shape());
      }
      Real* m = it->second.first.raw();
      Real* v = it->second.second.raw();
      Real* p = w.value.raw();
      const Real* gr = g->raw();
      for (std::size_t i = 0, n = w.value.size(); i < n; ++i) {
        m[i] = b1 * m[i] + (Real{1} - b1) * gr[i];
        v[i] = b2 * v[i] + (Real{1} - b2) * gr[i] * gr[i];
        const double m_hat = static_cast<double>(m[i]) / correction1;
        const double v_hat = static_cast<double>(v[i]) / correction2;
        const double update = state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        if (update != 0.0) p[i] = static_cast<Real>(static_cast<double>(p[i]) - update);
      }
    }
  }
}

}  // namespace msclstm
