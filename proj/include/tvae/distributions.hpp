#pragma once

// Reparameterized samplers and closed-form divergences for the diagonal
// Gaussian and Dirichlet families. Every function accepts a batch: each row
// of a parameter tensor is one distribution, and per-distribution results
// come back as an (rows x 1) column.

#include <span>
#include <vector>

#include "tvae/autodiff.hpp"
#include "tvae/rng.hpp"

namespace tvae {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kAlphaMin = 1e-3;
inline constexpr double kAlphaMax = 1e3;
inline constexpr double kSimplexFloor = 1e-8;

struct DiagGaussian {
  ad::Tensor mu;       // B x d
  ad::Tensor log_var;  // B x d, clamped to [kLogVarMin, kLogVarMax]

  /// Clamps log_var and checks that the shapes agree.
  static DiagGaussian from_raw(ad::Tensor mu, ad::Tensor raw_log_var);
  static DiagGaussian standard(std::size_t rows, std::size_t dim);

  std::size_t rows() const { return mu.rows(); }
  std::size_t dim() const { return mu.cols(); }
};

struct DirichletParams {
  ad::Tensor alpha;  // B x K, every entry > 0

  /// alpha = clamp(exp(log_alpha), kAlphaMin, kAlphaMax).
  static DirichletParams from_log(const ad::Tensor& log_alpha);
  /// Wraps explicit concentrations; throws DomainError if any is <= 0.
  static DirichletParams from_alpha(ad::Tensor alpha);

  std::size_t rows() const { return alpha.rows(); }
  std::size_t dim() const { return alpha.cols(); }
  /// Mean alpha / sum(alpha) per row.
  std::vector<double> mean_row(std::size_t r) const;
};

/// z = mu + exp(log_var / 2) * noise.
ad::Tensor gaussian_sample(const DiagGaussian& q, std::span<const double> noise);

/// KL(q || N(0, I)) per row.
ad::Tensor kl_gaussian_std(const DiagGaussian& q);

/// KL(q || p) per row for diagonal Gaussians of equal dimension.
ad::Tensor kl_gaussian_gaussian(const DiagGaussian& q, const DiagGaussian& p);

/// log N(z; mu, diag(exp(log_var))) summed over dimensions; no gradient.
double gaussian_log_density(std::span<const double> z, std::span<const double> mu,
                            std::span<const double> log_var);

// ---- Gamma / Dirichlet -----------------------------------------------------

/// One Gamma(alpha, 1) draw via Marsaglia-Tsang (alpha < 1 boosted).
double sample_gamma(double alpha, Rng& rng);

/// dg/dalpha = -(dF/dalpha)(g; alpha) / f(g; alpha) for a Gamma(alpha, 1)
/// variate g; zero where the density underflows.
double gamma_implicit_grad(double alpha, double g);

/// Registers already-drawn Gamma variates as a differentiable function of
/// alpha using the implicit reparameterization gradient.
ad::Tensor gamma_implicit(const ad::Tensor& alpha, std::vector<double> samples);

/// Gamma(alpha, 1) draws for every entry of alpha, differentiable in alpha.
ad::Tensor gamma_sample_implicit(const ad::Tensor& alpha, Rng& rng);

/// Gamma draws by CDF inversion of the given quantiles u in (0, 1). With u
/// held fixed the draw is a smooth function of alpha, which lets callers use
/// common random numbers for finite-difference checks.
ad::Tensor gamma_from_quantiles(const ad::Tensor& alpha, std::span<const double> u);

/// Clamps every entry to kSimplexFloor and renormalizes each row.
ad::Tensor project_to_simplex(const ad::Tensor& t);

/// t = g / sum(g), g_i ~ Gamma(alpha_i, 1), floored and renormalized.
ad::Tensor dirichlet_sample(const DirichletParams& params, Rng& rng);
/// Same, with Gamma quantiles u (rows x K) as the noise.
ad::Tensor dirichlet_sample_quantiles(const DirichletParams& params, std::span<const double> u);

/// Closed-form KL(q || p) per row.
ad::Tensor kl_dirichlet(const DirichletParams& q, const DirichletParams& p);

/// log Dir(t; alpha) per row. Throws DomainError if a row of t is off the
/// simplex (sum differs from 1 by more than 1e-6, or an entry is below the
/// simplex floor).
ad::Tensor dirichlet_log_prob(const ad::Tensor& t, const DirichletParams& params);

}  // namespace tvae
