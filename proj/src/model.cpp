#include "tvae/model.hpp"

#include <algorithm>
#include <cmath>

#include "tvae/errors.hpp"

namespace tvae {

using ad::Tensor;

std::string to_string(TopicMode mode) {
  switch (mode) {
    case TopicMode::none:
      return "none";
    case TopicMode::joint:
      return "joint";
    case TopicMode::marginal:
      return "marginal";
  }
  return "none";
}

TopicMode parse_topic_mode(const std::string& s) {
  if (s == "none") return TopicMode::none;
  if (s == "joint") return TopicMode::joint;
  if (s == "marginal") return TopicMode::marginal;
  throw ConfigError("unknown topic mode '" + s + "' (expected none, joint or marginal)");
}

void ModelConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(kNumReserved)) throw ConfigError("model: vocabulary has no real tokens");
  if (emb == 0 || hidden == 0 || latent == 0) throw ConfigError("model: emb, hidden and latent must be positive");
  if (uses_topics() && topics == 0) throw ConfigError("model: topic modes need topics >= 1");
  if (conditional && (classes == 0 || label_emb == 0)) {
    throw ConfigError("model: conditional mode needs classes >= 1 and label_emb >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
}

// ---- parameters -----------------------------------------------------------

namespace {

Tensor uniform_param(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor::parameter({rows, cols}, std::move(v));
}

Tensor zeros_param(std::size_t rows, std::size_t cols) {
  return Tensor::parameter({rows, cols}, std::vector<double>(rows * cols, 0.0));
}

Linear glorot_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  return {uniform_param(in, out, limit, rng), zeros_param(1, out)};
}

Mlp make_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Linear first = glorot_linear(in, hidden, rng);
  Linear second = glorot_linear(hidden, out, rng);
  return {std::move(first), std::move(second)};
}

LstmWeights make_lstm(std::size_t in, std::size_t hidden, Rng& rng) {
  LstmWeights w;
  w.input = uniform_param(in, 4 * hidden, 0.08, rng);
  w.recurrent = uniform_param(hidden, 4 * hidden, 0.08, rng);
  std::vector<double> bias(4 * hidden, 0.0);
  std::fill(bias.begin() + static_cast<std::ptrdiff_t>(hidden), bias.begin() + static_cast<std::ptrdiff_t>(2 * hidden),
            1.0);
  w.bias = Tensor::parameter({1, 4 * hidden}, std::move(bias));
  return w;
}

void push_linear(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name, const Linear& l) {
  out.emplace_back(name + ".weight", l.weight);
  out.emplace_back(name + ".bias", l.bias);
}

void push_mlp(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name, const Mlp& m) {
  push_linear(out, name + ".first", m.first);
  push_linear(out, name + ".second", m.second);
}

void push_lstm(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name, const LstmWeights& w) {
  out.emplace_back(name + ".input", w.input);
  out.emplace_back(name + ".recurrent", w.recurrent);
  out.emplace_back(name + ".bias", w.bias);
}

Tensor copy_param(const Tensor& t) {
  return Tensor::parameter(t.shape(), std::vector<double>(t.value().begin(), t.value().end()));
}

Linear copy_linear(const Linear& l) { return {copy_param(l.weight), copy_param(l.bias)}; }
Mlp copy_mlp(const Mlp& m) { return {copy_linear(m.first), copy_linear(m.second)}; }

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, "init"));
  const auto v = config.vocab_size, e = config.emb, h = config.hidden, dz = config.latent, k = config.topics;
  const std::size_t y = config.conditional ? config.label_emb : 0;
  const std::size_t t = config.uses_topics() ? k : 0;

  ModelParams p;
  p.config = config;
  p.embedding = uniform_param(v, e, 0.08, rng);
  if (config.conditional) p.label_embedding = uniform_param(config.classes, config.label_emb, 0.08, rng);
  p.encoder = make_lstm(e, h, rng);
  p.decoder = make_lstm(e, h, rng);
  p.output = glorot_linear(h, v, rng);

  const std::size_t recog_in = h + y + (config.topic == TopicMode::joint ? k : 0);
  p.mlp_mu = make_mlp(recog_in, h, dz, rng);
  p.mlp_log_var = make_mlp(recog_in, h, dz, rng);
  p.mlp_h = make_mlp(dz + t + y, h, 2 * h, rng);
  if (config.uses_topics()) p.mlp_alpha = make_mlp(dz, h, k, rng);
  if (config.topic == TopicMode::marginal) p.mlp_alpha_post = make_mlp(h + y, h, k, rng);
  if (config.conditional) p.mlp_prior_z = make_mlp(config.label_emb, h, 2 * dz, rng);
  if (config.bow) p.mlp_bow = make_mlp(dz + t, h, v, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", embedding);
  if (label_embedding) out.emplace_back("label_embedding", *label_embedding);
  push_lstm(out, "encoder", encoder);
  push_lstm(out, "decoder", decoder);
  push_linear(out, "output", output);
  push_mlp(out, "mlp_mu", mlp_mu);
  push_mlp(out, "mlp_log_var", mlp_log_var);
  push_mlp(out, "mlp_h", mlp_h);
  if (mlp_alpha) push_mlp(out, "mlp_alpha", *mlp_alpha);
  if (mlp_alpha_post) push_mlp(out, "mlp_alpha_post", *mlp_alpha_post);
  if (mlp_prior_z) push_mlp(out, "mlp_prior_z", *mlp_prior_z);
  if (mlp_bow) push_mlp(out, "mlp_bow", *mlp_bow);
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named()) n += t.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& t : tensors()) t.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams p;
  p.config = config;
  p.embedding = copy_param(embedding);
  if (label_embedding) p.label_embedding = copy_param(*label_embedding);
  p.encoder = {copy_param(encoder.input), copy_param(encoder.recurrent), copy_param(encoder.bias)};
  p.decoder = {copy_param(decoder.input), copy_param(decoder.recurrent), copy_param(decoder.bias)};
  p.output = copy_linear(output);
  p.mlp_mu = copy_mlp(mlp_mu);
  p.mlp_log_var = copy_mlp(mlp_log_var);
  p.mlp_h = copy_mlp(mlp_h);
  if (mlp_alpha) p.mlp_alpha = copy_mlp(*mlp_alpha);
  if (mlp_alpha_post) p.mlp_alpha_post = copy_mlp(*mlp_alpha_post);
  if (mlp_prior_z) p.mlp_prior_z = copy_mlp(*mlp_prior_z);
  if (mlp_bow) p.mlp_bow = copy_mlp(*mlp_bow);
  return p;
}

// ---- forward --------------------------------------------------------------

Tensor lstm_step(const LstmWeights& w, const Tensor& x, const LstmState& prev, LstmState& next) {
  const auto h = w.recurrent.rows();
  Tensor gates = ad::add_row(ad::add(ad::matmul(x, w.input), ad::matmul(prev.h, w.recurrent)), w.bias);
  Tensor i = ad::sigmoid(ad::slice_cols(gates, 0, h));
  Tensor f = ad::sigmoid(ad::slice_cols(gates, h, h));
  Tensor g = ad::tanh(ad::slice_cols(gates, 2 * h, h));
  Tensor o = ad::sigmoid(ad::slice_cols(gates, 3 * h, h));
  next.c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  next.h = ad::mul(o, ad::tanh(next.c));
  return next.h;
}

Tensor encode(const ModelParams& params, const CorpusBatch& batch, const ForwardContext& ctx) {
  const auto b = batch.batch_size;
  const auto hdim = params.config.hidden;
  if (b == 0 || batch.max_len < 3) throw InputError("encode: batch needs at least one token per sequence");
  for (int id : batch.tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= params.config.vocab_size) {
      throw DimensionError("encode: token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  LstmState state{Tensor::constant({b, hdim}, 0.0), Tensor::constant({b, hdim}, 0.0)};
  std::vector<int> ids(b);
  std::vector<double> mask(b * hdim);
  // Positions 1 .. len-1: interior tokens followed by eos.
  for (std::size_t s = 1; s < batch.max_len; ++s) {
    bool all_active = true;
    for (std::size_t r = 0; r < b; ++r) {
      ids[r] = batch.token(r, s);
      const double m = s < batch.lengths[r] ? 1.0 : 0.0;
      all_active = all_active && m == 1.0;
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(r * hdim), hdim, m);
    }
    Tensor x = ad::dropout(ad::embedding(params.embedding, ids), params.config.dropout, ctx.train, ctx.dropout_rng);
    LstmState next;
    lstm_step(params.encoder, x, state, next);
    if (all_active) {
      state = std::move(next);
    } else {
      state.h = ad::blend(mask, next.h, state.h);
      state.c = ad::blend(mask, next.c, state.c);
    }
  }
  return state.h;
}

Tensor label_embeddings(const ModelParams& params, std::span<const int> labels) {
  if (!params.label_embedding) throw ContractError("label embedding requested on a non-conditional model");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= params.config.classes) {
      throw InputError("label " + std::to_string(y) + " outside 0.." + std::to_string(params.config.classes - 1));
    }
  }
  return ad::embedding(*params.label_embedding, labels);
}

Tensor recognition_features(const ModelParams& params, const Tensor& h, const CorpusBatch& batch) {
  if (!params.config.conditional) return h;
  if (batch.labels.size() != batch.batch_size) throw InputError("conditional model requires labels");
  return ad::concat({h, label_embeddings(params, batch.labels)});
}

DiagGaussian posterior_z_joint(const ModelParams& params, const Tensor& features, const Tensor& t) {
  if (params.config.topic != TopicMode::joint) throw ContractError("posterior_z_joint: model is not in joint mode");
  if (t.rank() != 2 || t.cols() != params.config.topics || t.rows() != features.rows()) {
    throw DimensionError("posterior_z_joint: t must be batch x K");
  }
  Tensor in = ad::concat({features, t});
  return DiagGaussian::from_raw(params.mlp_mu(in), params.mlp_log_var(in));
}

DiagGaussian posterior_z_marginal(const ModelParams& params, const Tensor& features) {
  if (params.config.topic == TopicMode::joint) throw ContractError("posterior_z_marginal: joint model needs t");
  return DiagGaussian::from_raw(params.mlp_mu(features), params.mlp_log_var(features));
}

DiagGaussian posterior_z(const ModelParams& params, const Tensor& features, const Tensor* t) {
  if (params.config.topic == TopicMode::joint) {
    if (!t) throw InputError("joint model requires topic vectors");
    return posterior_z_joint(params, features, *t);
  }
  return posterior_z_marginal(params, features);
}

DirichletParams posterior_t(const ModelParams& params, const Tensor& features) {
  if (params.config.topic != TopicMode::marginal || !params.mlp_alpha_post) {
    throw ContractError("posterior_t is only available in marginal mode");
  }
  return DirichletParams::from_log((*params.mlp_alpha_post)(features));
}

DirichletParams prior_t(const ModelParams& params, const Tensor& z) {
  if (!params.mlp_alpha) throw ContractError("prior_t requires a topic mode");
  if (z.rank() != 2 || z.cols() != params.config.latent) throw DimensionError("prior_t: z must be batch x latent");
  return DirichletParams::from_log((*params.mlp_alpha)(z));
}

DiagGaussian prior_z_conditional(const ModelParams& params, std::span<const int> labels) {
  if (!params.mlp_prior_z) throw ContractError("prior_z_conditional requires a conditional model");
  Tensor out = (*params.mlp_prior_z)(label_embeddings(params, labels));
  const auto dz = params.config.latent;
  return DiagGaussian::from_raw(ad::slice_cols(out, 0, dz), ad::slice_cols(out, dz, dz));
}

Tensor latent_code(const ModelParams& params, const Tensor& z, const Tensor* t, std::span<const int> labels) {
  const auto& cfg = params.config;
  if (z.rank() != 2 || z.cols() != cfg.latent) throw DimensionError("latent_code: z must be batch x latent");
  std::vector<Tensor> parts{z};
  if (cfg.uses_topics()) {
    if (!t) throw InputError("latent_code: topic modes require t");
    if (t->rank() != 2 || t->cols() != cfg.topics || t->rows() != z.rows()) {
      throw DimensionError("latent_code: t must be batch x K");
    }
    parts.push_back(*t);
  }
  if (cfg.conditional) {
    if (labels.size() != z.rows()) throw InputError("latent_code: conditional model requires one label per row");
    parts.push_back(label_embeddings(params, labels));
  }
  return parts.size() == 1 ? z : ad::concat(parts);
}

namespace {

LstmState initial_decoder_state(const ModelParams& params, const Tensor& code) {
  const auto h = params.config.hidden;
  Tensor init = params.mlp_h(code);
  return {ad::slice_cols(init, 0, h), ad::slice_cols(init, h, h)};
}

}  // namespace

DecodeResult decode_teacher_forced(const ModelParams& params, const Tensor& code, const CorpusBatch& batch,
                                   const ForwardContext& ctx) {
  const auto b = batch.batch_size;
  if (code.rank() != 2 || code.rows() != b) throw DimensionError("decode: code rows must equal batch size");
  if (batch.max_len < 2) throw InputError("decode: sequences must contain bos and eos");
  const auto steps = batch.max_len - 1;
  LstmState state = initial_decoder_state(params, code);

  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  std::vector<int> ids(b);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t r = 0; r < b; ++r) ids[r] = batch.token(r, s);
    Tensor x = ad::embedding(params.embedding, ids);
    LstmState next;
    lstm_step(params.decoder, x, state, next);
    state = std::move(next);
    outputs.push_back(state.h);
  }
  Tensor hs = ad::dropout(ad::concat_rows(outputs), params.config.dropout, ctx.train, ctx.dropout_rng);
  Tensor logp = ad::log_softmax(params.output(hs));

  std::vector<int> targets(steps * b);
  std::vector<double> mask(steps * b);
  DecodeResult result;
  result.token_counts.resize(b);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t r = 0; r < b; ++r) {
      const bool active = s + 1 < batch.lengths[r];
      targets[s * b + r] = active ? batch.token(r, s + 1) : kPadId;
      mask[s * b + r] = active ? 1.0 : 0.0;
    }
  }
  for (std::size_t r = 0; r < b; ++r) result.token_counts[r] = batch.target_count(r);
  Tensor picked = ad::mul(ad::gather_cols(logp, targets), Tensor::constant({steps * b, 1}, std::move(mask)));
  Tensor per_example = ad::transpose(ad::sum_cols(ad::reshape(picked, {steps, b})));
  result.nll = ad::scale(per_example, -1.0);
  return result;
}

std::vector<int> greedy_decode(const ModelParams& params, const Tensor& code, std::size_t max_len) {
  if (code.rank() != 2 || code.rows() != 1) throw DimensionError("greedy_decode: expects a single code row");
  LstmState state = initial_decoder_state(params, code.detach());
  state.h = state.h.detach();
  state.c = state.c.detach();
  const Tensor embedding = params.embedding.detach();
  const LstmWeights w{params.decoder.input.detach(), params.decoder.recurrent.detach(), params.decoder.bias.detach()};
  const Linear output{params.output.weight.detach(), params.output.bias.detach()};
  std::vector<int> out;
  int prev = kBosId;
  while (out.size() < max_len) {
    const int ids[1] = {prev};
    LstmState next;
    lstm_step(w, ad::embedding(embedding, ids), state, next);
    state = std::move(next);
    const Tensor logits = output(state.h);
    const auto lv = logits.value();
    // Only real words or eos are eligible; eos ends the sentence.
    int best = kEosId;
    double best_v = lv[kEosId];
    for (std::size_t j = kNumReserved; j < lv.size(); ++j) {
      if (lv[j] > best_v) {
        best_v = lv[j];
        best = static_cast<int>(j);
      }
    }
    if (best == kEosId) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

Tensor bow_nll(const ModelParams& params, const Tensor& code, const CorpusBatch& batch) {
  if (!params.mlp_bow) throw ContractError("bow_nll: model was built without the BOW head");
  const auto b = batch.batch_size, v = params.config.vocab_size;
  const auto width = params.config.latent + (params.config.uses_topics() ? params.config.topics : 0);
  if (code.rank() != 2 || code.cols() != width || code.rows() != b) {
    throw DimensionError("bow_nll: code must be batch x " + std::to_string(width));
  }
  Tensor logp = ad::log_softmax((*params.mlp_bow)(code));
  std::vector<double> counts(b * v, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t s = 1; s + 1 < batch.lengths[r]; ++s) counts[r * v + batch.token(r, s)] += 1.0;
  }
  return ad::scale(ad::sum_rows(ad::mul(logp, Tensor::constant({b, v}, std::move(counts)))), -1.0);
}

Tensor batch_topics(const CorpusBatch& batch) {
  if (batch.topic_dim == 0 || batch.topics.size() != batch.batch_size * batch.topic_dim) {
    throw InputError("batch carries no topic vectors");
  }
  return Tensor::constant({batch.batch_size, batch.topic_dim}, batch.topics);
}

}  // namespace tvae
