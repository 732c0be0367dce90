#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "dmfbs/nd/tensor.hpp"

namespace dmfbs::nd {

enum class OptimizerKind { GD, Adam, RMSProp };

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::GD: return "GD";
    case OptimizerKind::Adam: return "ADAM";
    case OptimizerKind::RMSProp: return "RMSProp";
  }
  return "?";
}

/// Optimizer hyperparameters plus moment buffers. Defaults follow the
/// TensorFlow/Keras conventions (Adam 0.9/0.999/1e-7, RMSProp rho 0.9).
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  double rho = 0.9;
  std::int64_t step = 0;
  ParamSet<double> m;
  ParamSet<double> v;

  static OptimizerState make(OptimizerKind kind, double lr) {
    OptimizerState s;
    s.kind = kind;
    s.lr = lr;
    return s;
  }
  static OptimizerState gd(double lr) { return make(OptimizerKind::GD, lr); }
  static OptimizerState adam(double lr, double beta1 = 0.9) {
    OptimizerState s = make(OptimizerKind::Adam, lr);
    s.beta1 = beta1;
    return s;
  }
  static OptimizerState rmsprop(double lr) { return make(OptimizerKind::RMSProp, lr); }

  void reset() {
    step = 0;
    m.clear();
    v.clear();
  }
};

/// Applies one update in place. Buffers (batch-norm running stats) are skipped.
template <class T>
void optimizer_step(OptimizerState& state, ParamSet<T>& params, const ParamSet<T>& grads) {
  if (grads.size() != params.size()) throw UsageError("gradient set does not match parameter set");
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("gradient for unknown parameter '" + name + "'");
    if (it->second.shape != g.shape) throw UsageError("gradient shape mismatch for '" + name + "'");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  for (auto& [name, p] : params) {
    if (is_buffer(name)) continue;
    const Tensor<T>& g = grads.at(name);
    switch (state.kind) {
      case OptimizerKind::GD:
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= static_cast<T>(state.lr * static_cast<double>(g[i]));
        break;
      case OptimizerKind::Adam: {
        auto& m = state.m.try_emplace(name, p.shape).first->second;
        auto& v = state.v.try_emplace(name, p.shape).first->second;
        const double c1 = 1.0 - std::pow(state.beta1, t);
        const double c2 = 1.0 - std::pow(state.beta2, t);
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double gi = static_cast<double>(g[i]);
          m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
          v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
          const double mhat = m[i] / c1;
          const double vhat = v[i] / c2;
          p[i] -= static_cast<T>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
        break;
      }
      case OptimizerKind::RMSProp: {
        auto& v = state.v.try_emplace(name, p.shape).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double gi = static_cast<double>(g[i]);
          v[i] = state.rho * v[i] + (1.0 - state.rho) * gi * gi;
          p[i] -= static_cast<T>(state.lr * gi / (std::sqrt(v[i]) + state.eps));
        }
        break;
      }
    }
  }
}

}  // namespace dmfbs::nd
