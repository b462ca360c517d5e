#pragma once

// Latent Dirichlet allocation fitted by collapsed Gibbs sampling.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tvae {

struct LdaOptions {
  std::size_t topics = 8;
  std::size_t iterations = 200;
  double alpha = 0.0;  // 0 selects 50 / K
  double beta = 0.01;
  std::uint64_t seed = 0;
};

class LdaModel {
 public:
  LdaModel() = default;
  LdaModel(std::size_t topics, std::size_t vocab_size, double alpha, double beta);

  std::size_t topics() const { return topics_; }
  std::size_t vocab_size() const { return vocab_size_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  std::int64_t topic_word(std::size_t k, std::size_t w) const { return topic_word_[k * vocab_size_ + w]; }
  std::int64_t topic_count(std::size_t k) const { return topic_counts_[k]; }
  const std::vector<std::int64_t>& topic_word_counts() const { return topic_word_; }
  const std::vector<std::int64_t>& topic_counts() const { return topic_counts_; }

  /// phi_kw = (n_kw + beta) / (n_k + V beta)
  double word_probability(std::size_t k, std::size_t w) const;

  /// Row sums of topic_word equal topic_counts and nothing is negative.
  bool consistent() const;
  std::int64_t total_tokens() const;

  void save(const std::filesystem::path& path) const;
  static LdaModel load(const std::filesystem::path& path);

  // Mutation hooks for the sampler.
  void increment(std::size_t k, std::size_t w, std::int64_t delta);

 private:
  std::size_t topics_ = 0;
  std::size_t vocab_size_ = 0;
  double alpha_ = 0.0;
  double beta_ = 0.0;
  std::vector<std::int64_t> topic_word_;
  std::vector<std::int64_t> topic_counts_;
};

struct LdaFit {
  LdaModel model;
  /// Final topic assignment of every kept token, per document.
  std::vector<std::vector<int>> assignments;
  /// Kept (non-special) tokens per document, aligned with assignments.
  std::vector<std::vector<int>> tokens;
};

/// Drops reserved ids (pad/unk/bos/eos).
std::vector<int> lda_tokens(const std::vector<int>& ids);

/// Fits on token-id documents over a vocabulary of the given size. Reserved
/// ids are ignored; every document must keep at least one token.
LdaFit lda_fit(const std::vector<std::vector<int>>& docs, std::size_t vocab_size, const LdaOptions& options);

struct FoldInOptions {
  std::size_t sweeps = 50;
  std::size_t burn_in = 10;
  std::uint64_t seed = 0;
};

/// Smoothed topic proportions of a new document under fixed topic-word
/// counts: (n_k + alpha) / (N + K alpha), n_k averaged over post-burn-in
/// sweeps. Throws InputError when no token is in the model's vocabulary.
std::vector<double> lda_infer_theta(const LdaModel& model, const std::vector<int>& doc, const FoldInOptions& options);

/// per_topic most probable words of every topic, ties by smaller id.
std::vector<std::vector<int>> lda_top_words(const LdaModel& model, std::size_t per_topic);

}  // namespace tvae
