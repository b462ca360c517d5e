#pragma once

// Negative-ELBO training losses for the four model variants, the KL
// annealing schedule and the auxiliary bag-of-words loss. Every expectation
// is estimated with one reparameterized sample per example; the loss is
// summed over tokens and averaged over the batch.

#include <cstdint>
#include <optional>
#include <vector>

#include "tvae/autodiff.hpp"
#include "tvae/data.hpp"
#include "tvae/model.hpp"

namespace tvae {

inline constexpr std::size_t kAnnealStart = 2000;
inline constexpr std::size_t kAnnealEnd = 42000;

/// 0 up to step 2000, 1 from step 42000, linear in between.
double anneal_weight(std::size_t step);

/// Per-example noise for one forward pass.
struct LatentNoise {
  std::vector<double> eps_z;       // B x latent standard normals
  std::vector<double> u_t;         // B x K uniform Gamma quantiles (marginal)
  std::size_t rows = 0;

  static LatentNoise draw(const ModelConfig& config, std::size_t rows, Rng& rng);
  /// Noise for row i drawn from its own stream, so results for an example do
  /// not depend on which batch it lands in.
  static LatentNoise per_example(const ModelConfig& config, std::span<const std::uint64_t> seeds);
};

struct LossBreakdown {
  ad::Tensor total;            // scalar actually optimized
  double recon_nll = 0.0;      // batch means of the unannealed terms
  double kl_z = 0.0;
  /// Joint: -log p(t|z). Marginal: KL(q(t|x) || p(t|z)). Otherwise 0.
  double topic_term = 0.0;
  double bow_nll = 0.0;
  double anneal_weight = 0.0;

  // Per-example values (length B).
  std::vector<double> recon;
  std::vector<double> kl_z_rows;
  std::vector<double> topic_rows;
  std::vector<std::size_t> tokens;
};

struct LossOptions {
  double kl_weight = 1.0;  // multiplies true KL terms only
  bool include_bow = true;  // when the model has a BOW head
};

/// Dispatches on the model configuration.
LossBreakdown compute_loss(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                           const LossOptions& options, const ForwardContext& ctx);

LossBreakdown loss_vae(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                       std::size_t step, const ForwardContext& ctx = {});
LossBreakdown loss_cvae(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                        std::size_t step, const ForwardContext& ctx = {});
LossBreakdown loss_joint(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                         std::size_t step, const ForwardContext& ctx = {});
LossBreakdown loss_marginal(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                            std::size_t step, const ForwardContext& ctx = {});

/// BOW loss per example: -sum over interior tokens of log softmax(MLP_bow(code)).
ad::Tensor bow_loss(const ModelParams& params, const ad::Tensor& z, const ad::Tensor* t, const CorpusBatch& batch);

/// Importance-sampled log-likelihood of every example in the batch with the
/// recognition networks as proposal: log p(x) for standard and marginal
/// models, log p(x|y) for conditional ones, log p(x, t) for joint ones.
std::vector<double> importance_log_likelihood(const ModelParams& params, const CorpusBatch& batch,
                                              std::size_t samples, Rng& rng);

}  // namespace tvae
