#pragma once

// Corpus ingestion, vocabulary, batching and synthetic corpora.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tvae/rng.hpp"

namespace tvae {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kNumReserved = 4;
inline constexpr std::size_t kMaxVocab = 20000;
inline constexpr std::size_t kMaxLength = 200;

class Vocab {
 public:
  Vocab();

  /// Keeps the max_size most frequent tokens; ties go to first occurrence.
  static Vocab build(const std::vector<std::vector<std::string>>& training_docs, std::size_t max_size = kMaxVocab);
  static Vocab from_tokens(const std::vector<std::string>& tokens);  // non-reserved, in id order

  std::size_t size() const { return id_to_token_.size(); }
  int id(const std::string& token) const;  // kUnkId when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  void add(const std::string& token);

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Whitespace tokenization; optional lowercasing.
std::vector<std::string> tokenize(const std::string& line, bool lowercase = false);

/// [bos, ids..., eos]; interior truncated to kMaxLength. Throws InputError on
/// an empty line.
std::vector<int> numericalize(const Vocab& vocab, const std::string& line, bool lowercase = false);

/// Space-joined tokens between bos and eos (specials dropped).
std::string detokenize(const Vocab& vocab, const std::vector<int>& ids);

struct Example {
  std::vector<int> ids;        // bos ... eos
  int label = -1;              // -1 when unlabeled
  std::vector<double> topic;   // empty unless a topic sidecar is attached
  std::string text;            // original line

  std::size_t interior_length() const { return ids.size() - 2; }
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t num_classes = 0;  // 0 when unlabeled

  std::size_t size() const { return examples.size(); }
  bool labeled() const { return num_classes > 0; }
  bool has_topics() const { return !examples.empty() && !examples.front().topic.empty(); }
  std::size_t topic_dim() const { return has_topics() ? examples.front().topic.size() : 0; }
  std::vector<int> labels() const;
};

struct TextCorpus {
  std::vector<std::string> lines;
  std::vector<int> labels;  // empty when unlabeled
};

/// One document per line. With labeled = true each line is "label<TAB>text".
TextCorpus read_corpus(const std::filesystem::path& path, bool labeled);
void write_corpus(const std::filesystem::path& path, const TextCorpus& corpus);

Dataset make_dataset(const Vocab& vocab, const TextCorpus& corpus, bool lowercase = false);

/// Attaches topic vectors (one row per example), projected onto the simplex.
void attach_topics(Dataset& dataset, const std::vector<std::vector<double>>& topics);

std::vector<std::vector<double>> read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path, const std::vector<std::vector<double>>& rows);

struct CorpusBatch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;          // longest ids sequence (bos..eos) in the batch
  std::vector<int> tokens;          // batch_size x max_len, kPadId padded
  std::vector<std::size_t> lengths; // ids lengths including bos and eos
  std::vector<int> labels;          // empty or batch_size
  std::vector<double> topics;       // empty or batch_size x topic_dim
  std::size_t topic_dim = 0;

  int token(std::size_t b, std::size_t s) const { return tokens[b * max_len + s]; }
  /// Predicted tokens per row (interior + eos).
  std::size_t target_count(std::size_t b) const { return lengths[b] - 1; }
};

CorpusBatch make_batch(const Dataset& data, std::span<const std::size_t> indices);
CorpusBatch make_batch(const std::vector<Example>& examples);

/// Epoch-wise shuffled batches; the final partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t shuffle_seed);

  /// Order of example indices for an epoch, deterministic in (seed, epoch).
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;
  std::vector<CorpusBatch> epoch(std::size_t epoch) const;
  std::size_t batches_per_epoch() const;

 private:
  const Dataset& data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

// ---- synthetic corpora -----------------------------------------------------

struct MarkovChain {
  std::vector<double> initial;                  // n
  std::vector<std::vector<double>> transition;  // n x n, rows sum to 1
  std::size_t states() const { return initial.size(); }
};

/// Random first-order chain: Dirichlet(1) rows and initial distribution.
MarkovChain random_markov_chain(std::size_t states, Rng& rng);

/// Sequence of state indices with the given length.
std::vector<int> sample_chain(const MarkovChain& chain, std::size_t length, Rng& rng);

struct SyntheticSplits {
  TextCorpus train, valid, test;
  MarkovChain chain;
};

/// 100 tokens "w0".."w99", 10000/1000/1000 sequences, length uniform on 1..8.
SyntheticSplits synthetic_markov_corpus(std::uint64_t seed, std::size_t states = 100, std::size_t train = 10000,
                                        std::size_t valid = 1000, std::size_t test = 1000,
                                        std::size_t max_length = 8);

struct ClusterCorpusOptions {
  std::size_t clusters = 2;
  std::size_t words_per_cluster = 20;
  std::size_t train = 400;
  std::size_t valid = 100;
  std::size_t test = 100;
  std::size_t min_length = 5;
  std::size_t max_length = 10;
  /// Markov chains over each cluster's words when true, iid uniform words otherwise.
  bool markov = true;
};

/// Labeled corpus where each document uses only its cluster's vocabulary
/// ("c<k>w<j>" tokens); label = cluster index.
SyntheticSplits cluster_corpus(std::uint64_t seed, const ClusterCorpusOptions& options);

}  // namespace tvae
