#include "tvae/generation.hpp"

#include <cmath>

#include "tvae/distributions.hpp"
#include "tvae/errors.hpp"

namespace tvae {

using ad::Tensor;

namespace {

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  const auto c = t.cols();
  auto v = t.value().subspan(r * c, c);
  return {v.begin(), v.end()};
}

std::vector<double> normalized(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  for (auto& x : v) x /= s;
  return v;
}

}  // namespace

PosteriorStats posterior_stats(const ModelParams& params, const Dataset& data, std::size_t batch) {
  const auto& cfg = params.config;
  PosteriorStats out;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + batch, data.size()); ++i) idx.push_back(i);
    const CorpusBatch b = make_batch(data, idx);
    if (cfg.conditional && b.labels.size() != b.batch_size) throw InputError("conditional model requires labels");
    const Tensor features = recognition_features(params, encode(params, b, {}), b);
    Tensor t;
    if (cfg.topic == TopicMode::joint) {
      if (b.topic_dim != cfg.topics) throw InputError("joint model requires a topic vector per example");
      t = project_to_simplex(batch_topics(b));
    }
    const DiagGaussian q = posterior_z(params, features, t.defined() ? &t : nullptr);
    std::optional<DirichletParams> qt;
    if (cfg.topic == TopicMode::marginal) qt = posterior_t(params, features);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.mu.push_back(row_of(q.mu, r));
      out.log_var.push_back(row_of(q.log_var, r));
      if (qt) out.alpha.push_back(row_of(qt->alpha, r));
      if (t.defined()) out.topic.push_back(row_of(t, r));
    }
  }
  return out;
}

Matrix extract_representations(const ModelParams& params, const Dataset& data) {
  return posterior_stats(params, data).mu;
}

Matrix infer_topics(const ModelParams& params, const Dataset& data) {
  if (params.config.topic != TopicMode::marginal) throw ContractError("topic inference needs a marginal model");
  auto stats = posterior_stats(params, data);
  for (auto& row : stats.alpha) row = normalized(std::move(row));
  return stats.alpha;
}

std::vector<int> decode_latent(const ModelParams& params, const std::vector<double>& z, const std::vector<double>& t,
                               int label, std::size_t max_len) {
  const auto& cfg = params.config;
  if (z.size() != cfg.latent) throw DimensionError("decode_latent: z has the wrong size");
  const Tensor zt = Tensor::constant({1, cfg.latent}, z);
  Tensor tt;
  if (cfg.uses_topics()) {
    if (t.size() != cfg.topics) throw DimensionError("decode_latent: t has the wrong size");
    tt = Tensor::constant({1, cfg.topics}, t);
  }
  const int labels[1] = {label};
  const std::span<const int> ls = cfg.conditional ? std::span<const int>(labels) : std::span<const int>();
  return greedy_decode(params, latent_code(params, zt, tt.defined() ? &tt : nullptr, ls), max_len);
}

std::vector<Reconstruction> reconstruct(const ModelParams& params, const Example& example, std::size_t z_samples,
                                        std::size_t t_samples, Rng& rng, std::size_t max_len) {
  const auto& cfg = params.config;
  Dataset one;
  one.examples.push_back(example);
  if (cfg.conditional) one.num_classes = cfg.classes;
  const auto stats = posterior_stats(params, one);
  const auto& mu = stats.mu[0];
  const auto& lv = stats.log_var[0];
  std::vector<double> t_mean;
  if (cfg.topic == TopicMode::marginal) t_mean = normalized(stats.alpha[0]);
  if (cfg.topic == TopicMode::joint) t_mean = stats.topic[0];

  std::vector<Reconstruction> out;
  out.push_back({"mean", decode_latent(params, mu, t_mean, example.label, max_len)});
  for (std::size_t i = 0; i < z_samples; ++i) {
    std::vector<double> z(mu.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = mu[j] + std::exp(0.5 * lv[j]) * standard_normal(rng);
    out.push_back({"z-sample", decode_latent(params, z, t_mean, example.label, max_len)});
  }
  if (cfg.topic == TopicMode::marginal) {
    const auto alpha = DirichletParams::from_alpha(Tensor::constant({1, cfg.topics}, stats.alpha[0]));
    for (std::size_t i = 0; i < t_samples; ++i) {
      const auto t = row_of(dirichlet_sample(alpha, rng), 0);
      out.push_back({"t-sample", decode_latent(params, mu, t, example.label, max_len)});
    }
  }
  return out;
}

std::vector<double> draw_prior_z(const ModelParams& params, int label, double scale, Rng& rng) {
  const auto dz = params.config.latent;
  std::vector<double> mu(dz, 0.0), sd(dz, 1.0);
  if (params.config.conditional) {
    const int labels[1] = {label};
    const DiagGaussian p = prior_z_conditional(params, labels);
    for (std::size_t j = 0; j < dz; ++j) {
      mu[j] = p.mu.value()[j];
      sd[j] = std::exp(0.5 * p.log_var.value()[j]);
    }
  }
  std::vector<double> z(dz);
  for (std::size_t j = 0; j < dz; ++j) z[j] = mu[j] + scale * standard_normal(rng) * sd[j];
  return z;
}

std::vector<Generated> sample_sentences(const ModelParams& params, std::size_t count, int label, double scale,
                                        Rng& rng, std::size_t max_len) {
  const auto& cfg = params.config;
  if (cfg.conditional && (label < 0 || static_cast<std::size_t>(label) >= cfg.classes)) {
    throw InputError("sampling a conditional model needs a label in [0, classes)");
  }
  std::vector<Generated> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto z = draw_prior_z(params, label, scale, rng);
    std::vector<double> t;
    if (cfg.uses_topics()) {
      const auto alpha = prior_t(params, Tensor::constant({1, cfg.latent}, z));
      t = row_of(dirichlet_sample(DirichletParams{alpha.alpha.detach()}, rng), 0);
    }
    out.push_back({decode_latent(params, z, t, label, max_len), cfg.conditional ? label : -1});
  }
  return out;
}

InterpolateWhich parse_interpolate_which(const std::string& s) {
  if (s == "z") return InterpolateWhich::z;
  if (s == "t") return InterpolateWhich::t;
  if (s == "both") return InterpolateWhich::both;
  throw ConfigError("unknown interpolation target '" + s + "' (expected z, t or both)");
}

std::vector<std::vector<int>> interpolate(const ModelParams& params, const Example& a, const Example& b,
                                          std::size_t steps, InterpolateWhich which, std::size_t max_len) {
  const auto& cfg = params.config;
  if (steps < 2) throw ConfigError("interpolate: steps must be >= 2");
  if (which != InterpolateWhich::z && !cfg.uses_topics()) {
    throw ContractError("interpolating t needs a joint or marginal model");
  }
  Dataset pair;
  pair.examples = {a, b};
  if (cfg.conditional) pair.num_classes = cfg.classes;
  const auto stats = posterior_stats(params, pair);
  std::vector<double> ta, tb;
  if (cfg.topic == TopicMode::marginal) {
    ta = normalized(stats.alpha[0]);
    tb = normalized(stats.alpha[1]);
  } else if (cfg.topic == TopicMode::joint) {
    ta = stats.topic[0];
    tb = stats.topic[1];
  }
  const bool move_z = which != InterpolateWhich::t;
  const bool move_t = which != InterpolateWhich::z;
  std::vector<std::vector<int>> out;
  for (std::size_t s = 0; s < steps; ++s) {
    const double w = static_cast<double>(s) / static_cast<double>(steps - 1);
    std::vector<double> z = stats.mu[0];
    if (move_z && s + 1 == steps) {
      z = stats.mu[1];
    } else if (move_z) {
      for (std::size_t j = 0; j < z.size(); ++j) z[j] = (1.0 - w) * stats.mu[0][j] + w * stats.mu[1][j];
    }
    std::vector<double> t = ta;
    if (move_t && s + 1 == steps) {
      t = tb;
    } else if (move_t && s > 0) {
      for (std::size_t j = 0; j < t.size(); ++j) t[j] = (1.0 - w) * ta[j] + w * tb[j];
      t = normalized(std::move(t));
    }
    out.push_back(decode_latent(params, z, t, a.label, max_len));
  }
  return out;
}

}  // namespace tvae
