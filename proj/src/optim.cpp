#include "tvae/optim.hpp"

#include <cmath>

#include "tvae/errors.hpp"

namespace tvae {

void adam_step(std::vector<ad::Tensor>& params, AdamState& state, const AdamConfig& config) {
  if (!(config.lr > 0.0) || config.weight_decay < 0.0) {
    throw ConfigError("adam: lr must be positive, weight decay >= 0");
  }
  if (state.initialized() && state.m.size() != params.size()) throw DimensionError("adam: state does not match params");
  for (const auto& p : params) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient, step rejected");
    }
  }
  if (!state.initialized()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  const double decay = 1.0 - config.lr * config.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_value();
    auto grad = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != value.size()) throw DimensionError("adam: state does not match params");
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      value[j] = value[j] * decay - config.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config.eps);
    }
  }
}

}  // namespace tvae
