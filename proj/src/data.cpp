#include "tvae/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tvae/distributions.hpp"
#include "tvae/errors.hpp"

namespace tvae {

namespace {

const char* const kReserved[kNumReserved] = {"<pad>", "<unk>", "<bos>", "<eos>"};

std::string trim_newline(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

}  // namespace

// ---- Vocab ----------------------------------------------------------------

Vocab::Vocab() {
  for (const char* r : kReserved) add(r);
}

void Vocab::add(const std::string& token) {
  if (token_to_id_.count(token)) return;
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& training_docs, std::size_t max_size) {
  if (training_docs.empty()) throw InputError("build_vocab: empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  std::unordered_map<std::string, std::size_t> first_seen;
  std::size_t position = 0;
  for (const auto& doc : training_docs) {
    for (const auto& tok : doc) {
      ++counts[tok];
      first_seen.emplace(tok, position++);
    }
  }
  std::vector<std::string> tokens;
  tokens.reserve(counts.size());
  for (const auto& [tok, c] : counts) {
    bool reserved = false;
    for (const char* r : kReserved) reserved = reserved || tok == r;
    if (!reserved) tokens.push_back(tok);
  }
  std::sort(tokens.begin(), tokens.end(), [&](const std::string& a, const std::string& b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return first_seen[a] < first_seen[b];
  });
  if (tokens.size() > max_size) tokens.resize(max_size);
  if (tokens.empty()) throw InputError("build_vocab: corpus has no tokens");
  return from_tokens(tokens);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return id_to_token_[id];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write vocabulary to " + path.string());
  for (std::size_t i = kNumReserved; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read vocabulary from " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    line = trim_newline(line);
    if (!line.empty()) tokens.push_back(line);
  }
  return from_tokens(tokens);
}

// ---- text -----------------------------------------------------------------

std::vector<std::string> tokenize(const std::string& line, bool lowercase) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    if (lowercase) {
      std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return std::tolower(c); });
    }
    out.push_back(std::move(tok));
  }
  return out;
}

std::vector<int> numericalize(const Vocab& vocab, const std::string& line, bool lowercase) {
  auto toks = tokenize(line, lowercase);
  if (toks.empty()) throw InputError("numericalize: empty line");
  if (toks.size() > kMaxLength) toks.resize(kMaxLength);
  std::vector<int> ids;
  ids.reserve(toks.size() + 2);
  ids.push_back(kBosId);
  for (const auto& t : toks) ids.push_back(vocab.id(t));
  ids.push_back(kEosId);
  return ids;
}

std::string detokenize(const Vocab& vocab, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id == kBosId || id == kPadId) continue;
    if (id == kEosId) break;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

TextCorpus read_corpus(const std::filesystem::path& path, bool labeled) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus " + path.string());
  TextCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_newline(line);
    if (labeled) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected label<TAB>text");
      }
      try {
        std::size_t used = 0;
        const int label = std::stoi(line.substr(0, tab), &used);
        if (used != tab || label < 0) throw std::invalid_argument("label");
        corpus.labels.push_back(label);
      } catch (const std::exception&) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": label must be a non-negative integer");
      }
      corpus.lines.push_back(line.substr(tab + 1));
    } else {
      corpus.lines.push_back(line);
    }
  }
  if (corpus.lines.empty()) throw InputError("corpus " + path.string() + " is empty");
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const TextCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write corpus " + path.string());
  for (std::size_t i = 0; i < corpus.lines.size(); ++i) {
    if (!corpus.labels.empty()) out << corpus.labels[i] << '\t';
    out << corpus.lines[i] << '\n';
  }
}

Dataset make_dataset(const Vocab& vocab, const TextCorpus& corpus, bool lowercase) {
  Dataset ds;
  ds.examples.reserve(corpus.lines.size());
  int max_label = -1;
  for (std::size_t i = 0; i < corpus.lines.size(); ++i) {
    Example e;
    e.ids = numericalize(vocab, corpus.lines[i], lowercase);
    e.text = corpus.lines[i];
    if (!corpus.labels.empty()) {
      e.label = corpus.labels[i];
      max_label = std::max(max_label, e.label);
    }
    ds.examples.push_back(std::move(e));
  }
  ds.num_classes = corpus.labels.empty() ? 0 : static_cast<std::size_t>(max_label + 1);
  return ds;
}

void attach_topics(Dataset& dataset, const std::vector<std::vector<double>>& topics) {
  if (topics.size() != dataset.size()) {
    throw InputError("topic sidecar has " + std::to_string(topics.size()) + " rows, corpus has " +
                     std::to_string(dataset.size()));
  }
  const std::size_t k = topics.empty() ? 0 : topics.front().size();
  for (std::size_t i = 0; i < topics.size(); ++i) {
    const auto& row = topics[i];
    if (row.size() != k || k == 0) throw InputError("topic sidecar rows must all have the same positive width");
    double total = 0.0;
    std::vector<double> t(k);
    for (std::size_t j = 0; j < k; ++j) {
      if (!(row[j] >= 0.0)) throw InputError("topic sidecar entries must be non-negative");
      t[j] = std::max(row[j], kSimplexFloor);
      total += t[j];
    }
    for (auto& v : t) v /= total;
    dataset.examples[i].topic = std::move(t);
  }
}

std::vector<std::vector<double>> read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = trim_newline(line);
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InputError(path.string() + ": non-numeric cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_csv_matrix(const std::filesystem::path& path, const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(17);
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << row[j];
    }
    out << '\n';
  }
}

// ---- batching -------------------------------------------------------------

CorpusBatch make_batch(const std::vector<Example>& examples) {
  if (examples.empty()) throw InputError("make_batch: no examples");
  CorpusBatch b;
  b.batch_size = examples.size();
  for (const auto& e : examples) b.max_len = std::max(b.max_len, e.ids.size());
  b.tokens.assign(b.batch_size * b.max_len, kPadId);
  b.topic_dim = examples.front().topic.size();
  const bool labeled = examples.front().label >= 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    std::copy(e.ids.begin(), e.ids.end(), b.tokens.begin() + i * b.max_len);
    b.lengths.push_back(e.ids.size());
    if (labeled) b.labels.push_back(e.label);
    if (e.topic.size() != b.topic_dim) throw InputError("make_batch: inconsistent topic vectors");
    b.topics.insert(b.topics.end(), e.topic.begin(), e.topic.end());
  }
  return b;
}

CorpusBatch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<Example> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(data.examples.at(i));
  return make_batch(picked);
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t shuffle_seed)
    : data_(data), batch_size_(batch_size), seed_(shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

std::vector<std::size_t> BatchIterator::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed_, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<CorpusBatch> BatchIterator::epoch(std::size_t epoch) const {
  const auto order = epoch_order(epoch);
  std::vector<CorpusBatch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const auto end = std::min(order.size(), start + batch_size_);
    out.push_back(make_batch(data_, std::span<const std::size_t>(order.data() + start, end - start)));
  }
  return out;
}

std::size_t BatchIterator::batches_per_epoch() const { return (data_.size() + batch_size_ - 1) / batch_size_; }

// ---- synthetic ------------------------------------------------------------

namespace {

std::vector<double> dirichlet_ones(std::size_t n, Rng& rng) {
  std::vector<double> row(n);
  double total = 0.0;
  for (auto& v : row) total += (v = sample_gamma(1.0, rng));
  for (auto& v : row) v /= total;
  return row;
}

int sample_categorical(const std::vector<double>& p, Rng& rng) {
  double u = uniform01(rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (u < p[i]) return static_cast<int>(i);
    u -= p[i];
  }
  return static_cast<int>(p.size() - 1);
}

}  // namespace

MarkovChain random_markov_chain(std::size_t states, Rng& rng) {
  MarkovChain chain;
  chain.initial = dirichlet_ones(states, rng);
  chain.transition.reserve(states);
  for (std::size_t i = 0; i < states; ++i) chain.transition.push_back(dirichlet_ones(states, rng));
  return chain;
}

std::vector<int> sample_chain(const MarkovChain& chain, std::size_t length, Rng& rng) {
  std::vector<int> seq;
  seq.reserve(length);
  if (length == 0) return seq;
  seq.push_back(sample_categorical(chain.initial, rng));
  while (seq.size() < length) seq.push_back(sample_categorical(chain.transition[seq.back()], rng));
  return seq;
}

SyntheticSplits synthetic_markov_corpus(std::uint64_t seed, std::size_t states, std::size_t train, std::size_t valid,
                                        std::size_t test, std::size_t max_length) {
  Rng chain_rng(derive_seed(seed, "synthetic-chain"));
  SyntheticSplits out;
  out.chain = random_markov_chain(states, chain_rng);
  Rng rng(derive_seed(seed, "synthetic-sequences"));
  std::uniform_int_distribution<std::size_t> len_dist(1, max_length);
  auto fill = [&](TextCorpus& corpus, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto seq = sample_chain(out.chain, len_dist(rng), rng);
      std::string line;
      for (int s : seq) {
        if (!line.empty()) line += ' ';
        line += "w" + std::to_string(s);
      }
      corpus.lines.push_back(std::move(line));
    }
  };
  fill(out.train, train);
  fill(out.valid, valid);
  fill(out.test, test);
  return out;
}

SyntheticSplits cluster_corpus(std::uint64_t seed, const ClusterCorpusOptions& options) {
  if (options.clusters < 1 || options.words_per_cluster < 1 || options.min_length < 1 ||
      options.max_length < options.min_length) {
    throw ConfigError("cluster_corpus: invalid options");
  }
  Rng chain_rng(derive_seed(seed, "cluster-chains"));
  std::vector<MarkovChain> chains;
  for (std::size_t c = 0; c < options.clusters; ++c) {
    chains.push_back(random_markov_chain(options.words_per_cluster, chain_rng));
  }
  Rng rng(derive_seed(seed, "cluster-sequences"));
  std::uniform_int_distribution<std::size_t> len_dist(options.min_length, options.max_length);
  std::uniform_int_distribution<std::size_t> word_dist(0, options.words_per_cluster - 1);
  SyntheticSplits out;
  out.chain = chains.front();
  auto fill = [&](TextCorpus& corpus, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = i % options.clusters;
      const auto len = len_dist(rng);
      std::vector<int> seq;
      if (options.markov) {
        seq = sample_chain(chains[c], len, rng);
      } else {
        for (std::size_t j = 0; j < len; ++j) seq.push_back(static_cast<int>(word_dist(rng)));
      }
      std::string line;
      for (int s : seq) {
        if (!line.empty()) line += ' ';
        line += "c" + std::to_string(c) + "w" + std::to_string(s);
      }
      corpus.lines.push_back(std::move(line));
      corpus.labels.push_back(static_cast<int>(c));
    }
  };
  fill(out.train, options.train);
  fill(out.valid, options.valid);
  fill(out.test, options.test);
  return out;
}

}  // namespace tvae
