#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "latentlab/core/error.hpp"
#include "latentlab/numerics/autodiff.hpp"

namespace latentlab {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for every parameter of one ParameterSet.
template <class T>
struct OptimizerState {
  AdamConfig config;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  long step = 0;

  static OptimizerState for_parameters(const ParameterSet<T>& params, AdamConfig config) {
    OptimizerState s;
    s.config = config;
    for (const auto& p : params) {
      s.first_moment.emplace_back(p.value.shape());
      s.second_moment.emplace_back(p.value.shape());
    }
    return s;
  }
};

/// One bias-corrected Adam update using the gradients currently held in
/// `params`. A non-finite gradient aborts before any parameter is touched.
template <class T>
void adam_step(OptimizerState<T>& state, ParameterSet<T>& params, double learning_rate) {
  if (state.first_moment.size() != params.size()) throw ConfigError("optimizer state does not match parameter set");
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.grad.size(); ++i)
      if (!std::isfinite(static_cast<double>(p.grad[i])))
        throw NumericError("non-finite gradient in parameter '" + p.name + "' at flat index " + std::to_string(i) +
                           " (step " + std::to_string(state.step + 1) + ")");

  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.shape() != p.value.shape()) throw DimensionError("moment shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      p.value[i] -= static_cast<T>(learning_rate * mhat / (std::sqrt(vhat) + c.epsilon));
    }
  }
}

template <class T>
void adam_step(OptimizerState<T>& state, ParameterSet<T>& params) {
  adam_step(state, params, state.config.learning_rate);
}

}  // namespace latentlab
