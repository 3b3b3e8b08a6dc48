#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gase/common.hpp"
#include "gase/rng.hpp"
#include "gase/tensor.hpp"

namespace gase {

// Adam with bias correction, one moment pair per named parameter.
template <typename T>
struct AdamState {
  long step = 0;
  T lr = T(3e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T lr_decay = T(1);  // multiplicative, applied by the caller per epoch
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;
};

template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params, AdamState<T>& state) {
  ++state.step;
  T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (auto& [name, p] : params) {
    if (p.grad().empty())
      throw ContractError("adam_step: missing gradient for " + name);
    auto& [m, v] = state.moments[name];
    if (m.empty()) {
      m.assign(p.size(), T(0));
      v.assign(p.size(), T(0));
    }
    auto& val = p.mutable_data();
    const auto& g = p.grad();
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      val[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// Uniform Xavier/Glorot: ±sqrt(6 / (fan_in + fan_out)). For a rows×cols
// matrix applied as X·Wᵀ, fan_out = rows and fan_in = cols; a 1-D shape
// uses its length for both fans. Deterministic for a fixed seed.
template <typename T>
Tensor<T> xavier_init(const std::vector<int>& shape, std::uint64_t seed,
                      bool requires_grad = true) {
  if (shape.empty()) throw ArgumentError("xavier_init: shape must be >= 1-D");
  int rows = shape[0];
  int cols = shape.size() > 1 ? shape[1] : 1;
  int fan_out = shape[0];
  int fan_in = shape.size() > 1 ? shape[1] : shape[0];
  double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(seed);
  std::vector<T> data(static_cast<std::size_t>(rows) * cols);
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  if (shape.size() == 1) return Tensor<T>::from(1, rows, std::move(data), requires_grad);
  return Tensor<T>::from(rows, cols, std::move(data), requires_grad);
}

}  // namespace gase
