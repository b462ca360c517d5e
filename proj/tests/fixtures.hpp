#pragma once

// Small corpora shared by the test suites.

#include <vector>

#include "tvae/data.hpp"
#include "tvae/model.hpp"

namespace tvae::fixture {

struct TokenizedSplits {
  Vocab vocab;
  Dataset train, valid, test;
};

inline TokenizedSplits tokenize_splits(const SyntheticSplits& s) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& l : s.train.lines) docs.push_back(tokenize(l));
  TokenizedSplits out{Vocab::build(docs), {}, {}, {}};
  out.train = make_dataset(out.vocab, s.train);
  out.valid = make_dataset(out.vocab, s.valid);
  out.test = make_dataset(out.vocab, s.test);
  return out;
}

/// Two clusters, 200 documents each, iid words from disjoint 20-word
/// vocabularies. Documents are long enough for the 50/K document prior not
/// to swamp the evidence.
inline ClusterCorpusOptions separable_lda_options() {
  ClusterCorpusOptions o;
  o.clusters = 2;
  o.words_per_cluster = 20;
  o.train = 400;
  o.valid = 40;
  o.test = 40;
  o.min_length = 150;
  o.max_length = 200;
  o.markov = false;
  return o;
}

inline std::vector<std::vector<int>> id_docs(const Dataset& data) {
  std::vector<std::vector<int>> docs;
  for (const auto& ex : data.examples) docs.push_back(ex.ids);
  return docs;
}

/// Model variants exercised by the objective checks.
enum class Variant { vae, cvae, joint, marginal };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::vae: return "vae";
    case Variant::cvae: return "cvae";
    case Variant::joint: return "joint";
    case Variant::marginal: return "marginal";
  }
  return "?";
}

/// A few-parameter model over a 10-word vocabulary with K = 3.
inline ModelConfig toy_config(Variant v, bool bow = false) {
  ModelConfig c;
  c.vocab_size = 10;
  c.emb = 3;
  c.hidden = 4;
  c.latent = 2;
  c.label_emb = 2;
  c.dropout = 0.0;
  c.bow = bow;
  c.conditional = v == Variant::cvae;
  c.classes = c.conditional ? 2 : 0;
  c.topic = v == Variant::joint ? TopicMode::joint : v == Variant::marginal ? TopicMode::marginal : TopicMode::none;
  c.topics = c.topic == TopicMode::none ? 0 : 3;
  return c;
}

/// The two-sentence toy corpus, labeled and with topic vectors.
inline std::vector<Example> toy_examples() {
  std::vector<Example> ex(2);
  ex[0].ids = {kBosId, 4, 5, 6, 5, kEosId};
  ex[0].label = 0;
  ex[0].topic = {0.6, 0.3, 0.1};
  ex[1].ids = {kBosId, 7, 8, 9, kEosId};
  ex[1].label = 1;
  ex[1].topic = {0.1, 0.2, 0.7};
  return ex;
}

inline CorpusBatch toy_batch() { return make_batch(toy_examples()); }

}  // namespace tvae::fixture
