#pragma once

// Posterior statistics, greedy generation and latent-space interpolation.

#include <optional>
#include <string>
#include <vector>

#include "tvae/data.hpp"
#include "tvae/model.hpp"
#include "tvae/rng.hpp"

namespace tvae {

using Matrix = std::vector<std::vector<double>>;

struct PosteriorStats {
  Matrix mu;       // N x latent
  Matrix log_var;  // N x latent
  Matrix alpha;    // N x K, q(t|x) concentrations (marginal only)
  Matrix topic;    // N x K, the t the posterior over z was conditioned on (joint only)
};

PosteriorStats posterior_stats(const ModelParams& params, const Dataset& data, std::size_t batch = 64);

/// Posterior means of q(z|.), one row per document.
Matrix extract_representations(const ModelParams& params, const Dataset& data);

/// Mean of q(t|x) per document. Marginal models only.
Matrix infer_topics(const ModelParams& params, const Dataset& data);

/// Greedy decoding from explicit latent values. t is ignored unless the model
/// uses topics; label is ignored unless it is conditional.
std::vector<int> decode_latent(const ModelParams& params, const std::vector<double>& z, const std::vector<double>& t,
                               int label, std::size_t max_len = kMaxLength);

struct Reconstruction {
  std::string source;  // "mean", "z-sample", "t-sample"
  std::vector<int> ids;
};

/// Decodes from the posterior means, then from z samples with t at its mean,
/// then (marginal) from t samples with z at its mean.
std::vector<Reconstruction> reconstruct(const ModelParams& params, const Example& example, std::size_t z_samples,
                                        std::size_t t_samples, Rng& rng, std::size_t max_len = kMaxLength);

/// mu_p + scale * eps * sigma_p, with p = N(0, I) unless the model is conditional.
std::vector<double> draw_prior_z(const ModelParams& params, int label, double scale, Rng& rng);

struct Generated {
  std::vector<int> ids;
  int label = -1;
};

/// z from the (scaled) prior, t ~ Dir(prior_t(z)) in topic modes, greedy decoding.
std::vector<Generated> sample_sentences(const ModelParams& params, std::size_t count, int label, double scale,
                                        Rng& rng, std::size_t max_len = kMaxLength);

enum class InterpolateWhich { z, t, both };
InterpolateWhich parse_interpolate_which(const std::string& s);

/// `steps` evenly spaced points from a to b, each greedily decoded. The
/// variable not being interpolated stays at a's posterior mean.
std::vector<std::vector<int>> interpolate(const ModelParams& params, const Example& a, const Example& b,
                                          std::size_t steps, InterpolateWhich which,
                                          std::size_t max_len = kMaxLength);

}  // namespace tvae
