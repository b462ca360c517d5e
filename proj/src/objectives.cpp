#include "tvae/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "tvae/distributions.hpp"
#include "tvae/errors.hpp"

namespace tvae {

using ad::Tensor;

double anneal_weight(std::size_t step) {
  if (step <= kAnnealStart) return 0.0;
  if (step >= kAnnealEnd) return 1.0;
  return static_cast<double>(step - kAnnealStart) / static_cast<double>(kAnnealEnd - kAnnealStart);
}

LatentNoise LatentNoise::draw(const ModelConfig& config, std::size_t rows, Rng& rng) {
  LatentNoise n;
  n.rows = rows;
  n.eps_z.resize(rows * config.latent);
  for (auto& e : n.eps_z) e = standard_normal(rng);
  if (config.topic == TopicMode::marginal) {
    n.u_t.resize(rows * config.topics);
    for (auto& u : n.u_t) u = uniform_open01(rng);
  }
  return n;
}

LatentNoise LatentNoise::per_example(const ModelConfig& config, std::span<const std::uint64_t> seeds) {
  LatentNoise n;
  n.rows = seeds.size();
  for (auto seed : seeds) {
    Rng rng(seed);
    auto one = draw(config, 1, rng);
    n.eps_z.insert(n.eps_z.end(), one.eps_z.begin(), one.eps_z.end());
    n.u_t.insert(n.u_t.end(), one.u_t.begin(), one.u_t.end());
  }
  return n;
}

namespace {

std::vector<double> column(const Tensor& t) { return {t.value().begin(), t.value().end()}; }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

Tensor bow_loss(const ModelParams& params, const Tensor& z, const Tensor* t, const CorpusBatch& batch) {
  Tensor code = params.config.uses_topics() ? ad::concat({z, *t}) : z;
  return bow_nll(params, code, batch);
}

LossBreakdown compute_loss(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                           const LossOptions& options, const ForwardContext& ctx) {
  const auto& cfg = params.config;
  const auto b = batch.batch_size;
  if (noise.rows != b || noise.eps_z.size() != b * cfg.latent) throw DimensionError("loss: noise does not match batch");
  if (cfg.conditional && batch.labels.size() != b) throw InputError("conditional model requires labels");
  const std::span<const int> labels = cfg.conditional ? std::span<const int>(batch.labels) : std::span<const int>();

  Tensor h = encode(params, batch, ctx);
  Tensor features = recognition_features(params, h, batch);

  Tensor t;
  if (cfg.topic == TopicMode::joint) {
    if (batch.topic_dim != cfg.topics) throw InputError("joint model requires a topic vector per example");
    t = project_to_simplex(batch_topics(batch));
  }
  DiagGaussian q = posterior_z(params, features, cfg.topic == TopicMode::joint ? &t : nullptr);
  Tensor z = gaussian_sample(q, noise.eps_z);
  Tensor kl_z = cfg.conditional ? kl_gaussian_gaussian(q, prior_z_conditional(params, labels)) : kl_gaussian_std(q);

  Tensor kl_terms = kl_z;
  Tensor topic_term;
  if (cfg.topic == TopicMode::joint) {
    topic_term = ad::scale(dirichlet_log_prob(t, prior_t(params, z)), -1.0);
  } else if (cfg.topic == TopicMode::marginal) {
    if (noise.u_t.size() != b * cfg.topics) throw DimensionError("loss: topic noise does not match batch");
    DirichletParams qt = posterior_t(params, features);
    t = dirichlet_sample_quantiles(qt, noise.u_t);
    topic_term = kl_dirichlet(qt, prior_t(params, z));
    kl_terms = ad::add(kl_z, topic_term);
  }

  Tensor code = latent_code(params, z, t.defined() ? &t : nullptr, labels);
  DecodeResult dec = decode_teacher_forced(params, code, batch, ctx);

  Tensor rows = ad::add(dec.nll, ad::scale(kl_terms, options.kl_weight));
  if (cfg.topic == TopicMode::joint) rows = ad::add(rows, topic_term);
  Tensor bow;
  if (cfg.bow && options.include_bow) {
    bow = bow_loss(params, z, t.defined() ? &t : nullptr, batch);
    rows = ad::add(rows, bow);
  }

  LossBreakdown out;
  out.total = ad::scale(ad::sum(rows), 1.0 / static_cast<double>(b));
  out.anneal_weight = options.kl_weight;
  out.recon = column(dec.nll);
  out.kl_z_rows = column(kl_z);
  out.topic_rows = topic_term.defined() ? column(topic_term) : std::vector<double>(b, 0.0);
  out.tokens = dec.token_counts;
  out.recon_nll = mean_of(out.recon);
  out.kl_z = mean_of(out.kl_z_rows);
  out.topic_term = mean_of(out.topic_rows);
  out.bow_nll = bow.defined() ? mean_of(column(bow)) : 0.0;
  return out;
}

namespace {

LossOptions annealed(std::size_t step) { return {anneal_weight(step), true}; }

}  // namespace

LossBreakdown loss_vae(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                       std::size_t step, const ForwardContext& ctx) {
  if (params.config.conditional || params.config.uses_topics()) {
    throw ContractError("loss_vae: model is not a plain VAE");
  }
  return compute_loss(params, batch, noise, annealed(step), ctx);
}

LossBreakdown loss_cvae(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                        std::size_t step, const ForwardContext& ctx) {
  if (!params.config.conditional) throw ContractError("loss_cvae: model is not conditional");
  if (batch.labels.size() != batch.batch_size) throw InputError("loss_cvae: batch is missing labels");
  return compute_loss(params, batch, noise, annealed(step), ctx);
}

LossBreakdown loss_joint(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                         std::size_t step, const ForwardContext& ctx) {
  if (params.config.topic != TopicMode::joint) throw ContractError("loss_joint: model is not in joint mode");
  return compute_loss(params, batch, noise, annealed(step), ctx);
}

LossBreakdown loss_marginal(const ModelParams& params, const CorpusBatch& batch, const LatentNoise& noise,
                            std::size_t step, const ForwardContext& ctx) {
  if (params.config.topic != TopicMode::marginal) throw ContractError("loss_marginal: model is not in marginal mode");
  return compute_loss(params, batch, noise, annealed(step), ctx);
}

// ---- importance sampling --------------------------------------------------

std::vector<double> importance_log_likelihood(const ModelParams& params, const CorpusBatch& batch,
                                              std::size_t samples, Rng& rng) {
  const auto& cfg = params.config;
  if (samples == 0) throw ContractError("importance_log_likelihood: need at least one sample");
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  for (std::size_t i = 0; i < batch.batch_size; ++i) {
    Example ex;
    ex.ids.assign(batch.tokens.begin() + static_cast<std::ptrdiff_t>(i * batch.max_len),
                  batch.tokens.begin() + static_cast<std::ptrdiff_t>(i * batch.max_len + batch.lengths[i]));
    if (!batch.labels.empty()) ex.label = batch.labels[i];
    if (batch.topic_dim) {
      ex.topic.assign(batch.topics.begin() + static_cast<std::ptrdiff_t>(i * batch.topic_dim),
                      batch.topics.begin() + static_cast<std::ptrdiff_t>((i + 1) * batch.topic_dim));
    }
    std::vector<double> log_w;
    log_w.reserve(samples);
    for (std::size_t done = 0; done < samples; done += kChunk) {
      const auto n = std::min(kChunk, samples - done);
      CorpusBatch rep = make_batch(std::vector<Example>(n, ex));
      const std::span<const int> labels = cfg.conditional ? std::span<const int>(rep.labels) : std::span<const int>();
      Tensor features = recognition_features(params, encode(params, rep, {}), rep);
      Tensor t;
      if (cfg.topic == TopicMode::joint) t = project_to_simplex(batch_topics(rep));
      DiagGaussian q = posterior_z(params, features, t.defined() ? &t : nullptr);
      std::vector<double> eps(n * cfg.latent);
      for (auto& e : eps) e = standard_normal(rng);
      Tensor z = gaussian_sample(q, eps).detach();

      std::vector<double> lw(n, 0.0);
      std::vector<double> prior_mu(n * cfg.latent, 0.0), prior_lv(n * cfg.latent, 0.0);
      if (cfg.conditional) {
        DiagGaussian p = prior_z_conditional(params, labels);
        prior_mu.assign(p.mu.value().begin(), p.mu.value().end());
        prior_lv.assign(p.log_var.value().begin(), p.log_var.value().end());
      }
      const auto dz = cfg.latent;
      for (std::size_t r = 0; r < n; ++r) {
        auto zr = z.value().subspan(r * dz, dz);
        lw[r] += gaussian_log_density(zr, std::span<const double>(prior_mu).subspan(r * dz, dz),
                                      std::span<const double>(prior_lv).subspan(r * dz, dz));
        lw[r] -= gaussian_log_density(zr, q.mu.value().subspan(r * dz, dz), q.log_var.value().subspan(r * dz, dz));
      }
      if (cfg.topic == TopicMode::joint) {
        Tensor lp = dirichlet_log_prob(t, prior_t(params, z));
        for (std::size_t r = 0; r < n; ++r) lw[r] += lp.value()[r];
      } else if (cfg.topic == TopicMode::marginal) {
        DirichletParams qt = posterior_t(params, features);
        t = dirichlet_sample(DirichletParams{qt.alpha.detach()}, rng).detach();
        Tensor lq = dirichlet_log_prob(t, qt);
        Tensor lp = dirichlet_log_prob(t, prior_t(params, z));
        for (std::size_t r = 0; r < n; ++r) lw[r] += lp.value()[r] - lq.value()[r];
      }
      Tensor code = latent_code(params, z, t.defined() ? &t : nullptr, labels);
      DecodeResult dec = decode_teacher_forced(params, code, rep, {});
      for (std::size_t r = 0; r < n; ++r) log_w.push_back(lw[r] - dec.nll.value()[r]);
    }
    const double mx = *std::max_element(log_w.begin(), log_w.end());
    double acc = 0.0;
    for (double v : log_w) acc += std::exp(v - mx);
    out.push_back(mx + std::log(acc / static_cast<double>(log_w.size())));
  }
  return out;
}

}  // namespace tvae
