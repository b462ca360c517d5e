#pragma once

// Adam with decoupled, multiplicative weight decay.

#include <vector>

#include "tvae/autodiff.hpp"

namespace tvae {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // p <- p * (1 - lr * weight_decay) before the moment update
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;

  bool initialized() const { return !m.empty(); }
};

/// One update of every tensor from its accumulated gradient. A tensor that
/// received no gradient is treated as having a zero one. Throws NumericError
/// and leaves params and state untouched if any gradient is non-finite.
void adam_step(std::vector<ad::Tensor>& params, AdamState& state, const AdamConfig& config);

}  // namespace tvae
