#pragma once

// Neural components of the topic-aware VAE: shared embeddings, one-layer
// LSTM encoder/decoder, and the two-layer MLPs that parameterize the
// Gaussian posterior over z, the Dirichlet prior/posterior over t, the
// initial decoder state, the label-conditioned prior, and the BOW head.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tvae/autodiff.hpp"
#include "tvae/data.hpp"
#include "tvae/distributions.hpp"

namespace tvae {

enum class TopicMode { none, joint, marginal };

std::string to_string(TopicMode mode);
TopicMode parse_topic_mode(const std::string& s);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t emb = 200;
  std::size_t hidden = 200;
  std::size_t latent = 16;
  std::size_t topics = 0;  // K; 0 when topic == none
  std::size_t label_emb = 8;
  std::size_t classes = 0;  // C; used when conditional
  double dropout = 0.2;
  TopicMode topic = TopicMode::none;
  bool conditional = false;
  bool bow = false;

  void validate() const;
  bool uses_topics() const { return topic != TopicMode::none; }
};

struct Linear {
  ad::Tensor weight;  // in x out
  ad::Tensor bias;    // 1 x out

  ad::Tensor operator()(const ad::Tensor& x) const { return ad::add_row(ad::matmul(x, weight), bias); }
};

/// Two fully connected layers with a tanh in between.
struct Mlp {
  Linear first;
  Linear second;

  ad::Tensor operator()(const ad::Tensor& x) const { return second(ad::tanh(first(x))); }
};

/// Gates laid out as [input, forget, cell, output] along the 4H axis.
struct LstmWeights {
  ad::Tensor input;      // in x 4H
  ad::Tensor recurrent;  // H x 4H
  ad::Tensor bias;       // 1 x 4H
};

struct LstmState {
  ad::Tensor h;
  ad::Tensor c;
};

struct ModelParams {
  ModelConfig config;

  ad::Tensor embedding;                   // V x emb, shared by encoder and decoder
  std::optional<ad::Tensor> label_embedding;  // C x label_emb
  LstmWeights encoder;
  LstmWeights decoder;
  Linear output;                          // hidden x V
  Mlp mlp_mu;
  Mlp mlp_log_var;
  Mlp mlp_h;                              // -> 2 * hidden (initial h, c)
  std::optional<Mlp> mlp_alpha;           // z -> log alpha (topic modes)
  std::optional<Mlp> mlp_alpha_post;      // h -> log alpha' (marginal)
  std::optional<Mlp> mlp_prior_z;         // label embedding -> (mu_p, log_var_p)
  std::optional<Mlp> mlp_bow;             // [z, t] -> vocabulary logits

  /// Every trainable tensor with a stable dotted name.
  std::vector<std::pair<std::string, ad::Tensor>> named() const;
  std::vector<ad::Tensor> tensors() const;
  std::size_t parameter_count() const;
  void zero_grad();
  ModelParams clone() const;  // deep copy of values
};

/// Uniform(-0.08, 0.08) for embeddings and recurrent weights, Glorot-uniform
/// for MLP and projection layers, zero biases except forget-gate bias = 1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct ForwardContext {
  bool train = false;
  Rng* dropout_rng = nullptr;
};

ad::Tensor lstm_step(const LstmWeights& w, const ad::Tensor& x, const LstmState& prev, LstmState& next);

/// Recognition feature: encoder final hidden state, with the label
/// embedding appended in conditional mode.
ad::Tensor encode(const ModelParams& params, const CorpusBatch& batch, const ForwardContext& ctx);
ad::Tensor recognition_features(const ModelParams& params, const ad::Tensor& h, const CorpusBatch& batch);

ad::Tensor label_embeddings(const ModelParams& params, std::span<const int> labels);

DiagGaussian posterior_z_joint(const ModelParams& params, const ad::Tensor& features, const ad::Tensor& t);
DiagGaussian posterior_z_marginal(const ModelParams& params, const ad::Tensor& features);
/// q(z | .) for whichever mode the params were built for.
DiagGaussian posterior_z(const ModelParams& params, const ad::Tensor& features, const ad::Tensor* t);
DirichletParams posterior_t(const ModelParams& params, const ad::Tensor& features);
DirichletParams prior_t(const ModelParams& params, const ad::Tensor& z);
DiagGaussian prior_z_conditional(const ModelParams& params, std::span<const int> labels);

/// Concatenation fed to MLP_h and the BOW head: [z, t, label embedding].
ad::Tensor latent_code(const ModelParams& params, const ad::Tensor& z, const ad::Tensor* t,
                       std::span<const int> labels);

struct DecodeResult {
  ad::Tensor nll;  // B x 1, summed reconstruction NLL per example
  std::vector<std::size_t> token_counts;
};

/// Teacher-forced decoding from the initial state MLP_h(code).
DecodeResult decode_teacher_forced(const ModelParams& params, const ad::Tensor& code, const CorpusBatch& batch,
                                   const ForwardContext& ctx);

/// Greedy decoding for a single code row; stops at eos or max_len tokens.
std::vector<int> greedy_decode(const ModelParams& params, const ad::Tensor& code, std::size_t max_len);

/// -sum log softmax(MLP_bow(code))[w] over the interior tokens of each row.
/// code is [z, t] (z alone in standard mode); labels are not part of it.
ad::Tensor bow_nll(const ModelParams& params, const ad::Tensor& code, const CorpusBatch& batch);

/// t rows from the batch's topic vectors (B x K constant).
ad::Tensor batch_topics(const CorpusBatch& batch);

}  // namespace tvae
