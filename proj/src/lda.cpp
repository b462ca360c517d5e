#include "tvae/lda.hpp"

#include <algorithm>
#include <numeric>

#include "tvae/checkpoint.hpp"
#include "tvae/data.hpp"
#include "tvae/errors.hpp"
#include "tvae/rng.hpp"

namespace tvae {

LdaModel::LdaModel(std::size_t topics, std::size_t vocab_size, double alpha, double beta)
    : topics_(topics),
      vocab_size_(vocab_size),
      alpha_(alpha),
      beta_(beta),
      topic_word_(topics * vocab_size, 0),
      topic_counts_(topics, 0) {}

double LdaModel::word_probability(std::size_t k, std::size_t w) const {
  return (static_cast<double>(topic_word(k, w)) + beta_) /
         (static_cast<double>(topic_counts_[k]) + static_cast<double>(vocab_size_) * beta_);
}

bool LdaModel::consistent() const {
  for (std::size_t k = 0; k < topics_; ++k) {
    std::int64_t row = 0;
    for (std::size_t w = 0; w < vocab_size_; ++w) {
      const auto c = topic_word(k, w);
      if (c < 0) return false;
      row += c;
    }
    if (row != topic_counts_[k] || topic_counts_[k] < 0) return false;
  }
  return true;
}

std::int64_t LdaModel::total_tokens() const {
  return std::accumulate(topic_counts_.begin(), topic_counts_.end(), std::int64_t{0});
}

void LdaModel::increment(std::size_t k, std::size_t w, std::int64_t delta) {
  topic_word_[k * vocab_size_ + w] += delta;
  topic_counts_[k] += delta;
}

void LdaModel::save(const std::filesystem::path& path) const {
  ArchiveWriter w;
  w.put_int("lda.topics", static_cast<std::int64_t>(topics_));
  w.put_int("lda.vocab_size", static_cast<std::int64_t>(vocab_size_));
  w.put_scalar("lda.alpha", alpha_);
  w.put_scalar("lda.beta", beta_);
  w.put("lda.topic_word_counts", {topics_, vocab_size_}, topic_word_);
  w.put("lda.topic_counts", {topics_}, topic_counts_);
  w.write(path);
}

LdaModel LdaModel::load(const std::filesystem::path& path) {
  auto r = ArchiveReader::read(path);
  LdaModel m(static_cast<std::size_t>(r.integer("lda.topics")), static_cast<std::size_t>(r.integer("lda.vocab_size")),
             r.scalar("lda.alpha"), r.scalar("lda.beta"));
  m.topic_word_ = r.ints("lda.topic_word_counts");
  m.topic_counts_ = r.ints("lda.topic_counts");
  if (m.topic_word_.size() != m.topics_ * m.vocab_size_ || m.topic_counts_.size() != m.topics_ || !m.consistent()) {
    throw InputError("LDA checkpoint " + path.string() + " has inconsistent counts");
  }
  return m;
}

std::vector<int> lda_tokens(const std::vector<int>& ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= kNumReserved) out.push_back(id);
  }
  return out;
}

LdaFit lda_fit(const std::vector<std::vector<int>>& docs, std::size_t vocab_size, const LdaOptions& options) {
  if (docs.empty()) throw InputError("lda_fit: empty corpus");
  if (options.topics < 1) throw ConfigError("lda_fit: need at least one topic");
  const std::size_t k_topics = options.topics;
  const double alpha = options.alpha > 0.0 ? options.alpha : 50.0 / static_cast<double>(k_topics);
  const double beta = options.beta;
  if (!(beta > 0.0)) throw ConfigError("lda_fit: beta must be positive");

  LdaFit fit;
  fit.model = LdaModel(k_topics, vocab_size, alpha, beta);
  fit.tokens.reserve(docs.size());
  for (const auto& d : docs) {
    auto kept = lda_tokens(d);
    if (kept.empty()) throw InputError("lda_fit: a document has no tokens after dropping reserved ids");
    for (int w : kept) {
      if (static_cast<std::size_t>(w) >= vocab_size) throw InputError("lda_fit: token id outside vocabulary");
    }
    fit.tokens.push_back(std::move(kept));
  }

  Rng rng(options.seed);
  std::uniform_int_distribution<int> init(0, static_cast<int>(k_topics) - 1);
  std::vector<std::vector<std::int64_t>> doc_topic(docs.size(), std::vector<std::int64_t>(k_topics, 0));
  fit.assignments.resize(docs.size());
  for (std::size_t d = 0; d < fit.tokens.size(); ++d) {
    for (int w : fit.tokens[d]) {
      const int k = init(rng);
      fit.assignments[d].push_back(k);
      ++doc_topic[d][k];
      fit.model.increment(k, w, 1);
    }
  }

  const double v_beta = static_cast<double>(vocab_size) * beta;
  std::vector<double> weights(k_topics);
  for (std::size_t sweep = 0; sweep < options.iterations; ++sweep) {
    for (std::size_t d = 0; d < fit.tokens.size(); ++d) {
      auto& z = fit.assignments[d];
      auto& nd = doc_topic[d];
      for (std::size_t i = 0; i < z.size(); ++i) {
        const int w = fit.tokens[d][i];
        const int old = z[i];
        --nd[old];
        fit.model.increment(old, w, -1);
        double total = 0.0;
        for (std::size_t k = 0; k < k_topics; ++k) {
          total += weights[k] = (static_cast<double>(nd[k]) + alpha) *
                                (static_cast<double>(fit.model.topic_word(k, w)) + beta) /
                                (static_cast<double>(fit.model.topic_count(k)) + v_beta);
        }
        double u = uniform01(rng) * total;
        int pick = static_cast<int>(k_topics) - 1;
        for (std::size_t k = 0; k < k_topics; ++k) {
          if (u < weights[k]) {
            pick = static_cast<int>(k);
            break;
          }
          u -= weights[k];
        }
        z[i] = pick;
        ++nd[pick];
        fit.model.increment(pick, w, 1);
      }
    }
  }
  return fit;
}

std::vector<double> lda_infer_theta(const LdaModel& model, const std::vector<int>& doc, const FoldInOptions& options) {
  if (options.sweeps <= options.burn_in) throw ConfigError("lda_infer_theta: sweeps must exceed burn-in");
  std::vector<int> tokens;
  for (int w : lda_tokens(doc)) {
    if (static_cast<std::size_t>(w) < model.vocab_size()) tokens.push_back(w);
  }
  if (tokens.empty()) throw InputError("lda_infer_theta: document has no in-vocabulary tokens");

  const std::size_t k_topics = model.topics();
  const double alpha = model.alpha();
  const double beta = model.beta();
  const double v_beta = static_cast<double>(model.vocab_size()) * beta;

  // Topic-word probabilities are fixed during fold-in.
  std::vector<double> phi(tokens.size() * k_topics);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t k = 0; k < k_topics; ++k) {
      phi[i * k_topics + k] = (static_cast<double>(model.topic_word(k, tokens[i])) + beta) /
                              (static_cast<double>(model.topic_count(k)) + v_beta);
    }
  }

  Rng rng(options.seed);
  std::uniform_int_distribution<int> init(0, static_cast<int>(k_topics) - 1);
  std::vector<int> z(tokens.size());
  std::vector<double> nd(k_topics, 0.0);
  for (auto& zi : z) nd[zi = init(rng)] += 1.0;

  std::vector<double> accum(k_topics, 0.0);
  std::vector<double> weights(k_topics);
  std::size_t kept = 0;
  for (std::size_t sweep = 0; sweep < options.sweeps; ++sweep) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      nd[z[i]] -= 1.0;
      double total = 0.0;
      for (std::size_t k = 0; k < k_topics; ++k) total += weights[k] = (nd[k] + alpha) * phi[i * k_topics + k];
      double u = uniform01(rng) * total;
      int pick = static_cast<int>(k_topics) - 1;
      for (std::size_t k = 0; k < k_topics; ++k) {
        if (u < weights[k]) {
          pick = static_cast<int>(k);
          break;
        }
        u -= weights[k];
      }
      z[i] = pick;
      nd[pick] += 1.0;
    }
    if (sweep >= options.burn_in) {
      for (std::size_t k = 0; k < k_topics; ++k) accum[k] += nd[k];
      ++kept;
    }
  }
  const double n = static_cast<double>(tokens.size());
  std::vector<double> theta(k_topics);
  for (std::size_t k = 0; k < k_topics; ++k) {
    theta[k] = (accum[k] / static_cast<double>(kept) + alpha) / (n + static_cast<double>(k_topics) * alpha);
  }
  return theta;
}

std::vector<std::vector<int>> lda_top_words(const LdaModel& model, std::size_t per_topic) {
  const std::size_t candidates = model.vocab_size() > kNumReserved ? model.vocab_size() - kNumReserved : 0;
  if (per_topic == 0 || per_topic > candidates) throw InputError("lda_top_words: per_topic outside 1..vocabulary size");
  std::vector<std::vector<int>> out;
  for (std::size_t k = 0; k < model.topics(); ++k) {
    std::vector<int> ids(candidates);
    std::iota(ids.begin(), ids.end(), kNumReserved);
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(per_topic), ids.end(), [&](int a, int b) {
      const auto ca = model.topic_word(k, a), cb = model.topic_word(k, b);
      if (ca != cb) return ca > cb;  // same ordering as (count + beta) smoothing
      return a < b;
    });
    ids.resize(per_topic);
    out.push_back(std::move(ids));
  }
  return out;
}

}  // namespace tvae
