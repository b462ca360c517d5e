#pragma once

// Central finite-difference gradient checks for the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tvae/autodiff.hpp"
#include "tvae/rng.hpp"

namespace tvae::fixture {

struct GradError {
  double max_rel = 0.0;   // worst elementwise |g - fd| / (|fd| + 1e-8)
  double norm_rel = 0.0;  // worst per-tensor ||g - fd|| / (||fd|| + 1e-8)
};

/// Reduces forward() to a scalar with a fixed random linear functional, then
/// compares analytic and central-difference gradients for every input.
inline GradError check_gradients(const std::function<ad::Tensor()>& forward, std::vector<ad::Tensor> inputs,
                                 double h = 1e-5, std::uint64_t seed = 17) {
  std::vector<double> weights;
  auto reduce = [&](const ad::Tensor& out) {
    if (weights.size() != out.size()) {
      Rng rng(seed);
      weights.resize(out.size());
      for (auto& w : weights) w = 0.5 + uniform01(rng);
    }
    return ad::sum(ad::mul(out, ad::Tensor::constant(out.shape(), weights)));
  };
  for (auto& t : inputs) t.zero_grad();
  ad::backward(reduce(forward()));
  GradError err;
  for (auto& t : inputs) {
    const std::vector<double> g(t.grad().begin(), t.grad().end());
    double diff2 = 0.0, ref2 = 0.0;
    auto v = t.mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x0 = v[i];
      v[i] = x0 + h;
      const double up = reduce(forward()).item();
      v[i] = x0 - h;
      const double down = reduce(forward()).item();
      v[i] = x0;
      const double fd = (up - down) / (2.0 * h);
      const double gi = g.empty() ? 0.0 : g[i];
      err.max_rel = std::max(err.max_rel, std::abs(gi - fd) / (std::abs(fd) + 1e-8));
      diff2 += (gi - fd) * (gi - fd);
      ref2 += fd * fd;
    }
    err.norm_rel = std::max(err.norm_rel, std::sqrt(diff2) / (std::sqrt(ref2) + 1e-8));
  }
  return err;
}

inline ad::Tensor random_param(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = lo + (hi - lo) * uniform01(rng);
  return ad::Tensor::parameter({rows, cols}, std::move(v));
}

}  // namespace tvae::fixture
