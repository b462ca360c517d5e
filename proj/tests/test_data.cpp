#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "tvae/data.hpp"
#include "tvae/errors.hpp"

using namespace tvae;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tvae_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Vocab vocab_of(const std::vector<std::string>& lines) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& l : lines) docs.push_back(tokenize(l));
  return Vocab::build(docs);
}

}  // namespace

TEST(Vocab, ThreeDistinctTokensGiveSizeSeven) {
  auto v = vocab_of({"a b c", "c b a a"});
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.token(kPadId), "<pad>");
  EXPECT_EQ(v.id("zzz"), kUnkId);
}

TEST(Vocab, FrequencyOrderWithFirstOccurrenceTies) {
  auto v = vocab_of({"x y z", "z y w"});
  // y and z occur twice: y first. x and w once: x first.
  EXPECT_EQ(v.id("y"), 4);
  EXPECT_EQ(v.id("z"), 5);
  EXPECT_EQ(v.id("x"), 6);
  EXPECT_EQ(v.id("w"), 7);
  auto again = vocab_of({"x y z", "z y w"});
  for (int i = 0; i < static_cast<int>(v.size()); ++i) EXPECT_EQ(v.token(i), again.token(i));
}

TEST(Vocab, CapKeepsMostFrequent) {
  std::vector<std::vector<std::string>> docs = {{"a", "a", "a", "b", "b", "c"}};
  auto v = Vocab::build(docs, 2);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("b"));
  EXPECT_EQ(v.id("c"), kUnkId);
}

TEST(Vocab, EmptyCorpusIsInputError) {
  EXPECT_THROW(Vocab::build({}), InputError);
}

TEST(Vocab, SaveLoadRoundTrip) {
  auto dir = temp_dir("vocab");
  auto v = vocab_of({"the cat sat", "on the mat"});
  v.save(dir / "vocab.txt");
  auto w = Vocab::load(dir / "vocab.txt");
  ASSERT_EQ(v.size(), w.size());
  for (int i = 0; i < static_cast<int>(v.size()); ++i) EXPECT_EQ(v.token(i), w.token(i));
}

TEST(Numericalize, RoundTripAndSpecials) {
  auto v = vocab_of({"the cat sat on the mat"});
  auto ids = numericalize(v, "the mat sat");
  ASSERT_EQ(ids.size(), 5u);
  EXPECT_EQ(ids.front(), kBosId);
  EXPECT_EQ(ids.back(), kEosId);
  EXPECT_EQ(detokenize(v, ids), "the mat sat");
  EXPECT_EQ(numericalize(v, "the dog")[2], kUnkId);
}

TEST(Numericalize, TruncatesToTwoHundred) {
  std::string line;
  for (int i = 0; i < 250; ++i) line += (i ? " w" : "w") + std::to_string(i % 7);
  auto v = vocab_of({line});
  auto ids = numericalize(v, line);
  EXPECT_EQ(ids.size(), 202u);
}

TEST(Numericalize, EmptyLineIsInputError) {
  auto v = vocab_of({"a"});
  EXPECT_THROW(numericalize(v, ""), InputError);
  EXPECT_THROW(numericalize(v, "   "), InputError);
}

TEST(Numericalize, DetokenizeInvertsNumericalize) {
  auto s = synthetic_markov_corpus(3, 30, 200, 10, 10);
  std::vector<std::vector<std::string>> docs;
  for (const auto& l : s.train.lines) docs.push_back(tokenize(l));
  auto v = Vocab::build(docs);
  for (const auto& l : s.train.lines) EXPECT_EQ(detokenize(v, numericalize(v, l)), l);
}

TEST(Corpus, LabeledReadWrite) {
  auto dir = temp_dir("corpus");
  TextCorpus c{{"a b", "c d e"}, {1, 0}};
  write_corpus(dir / "c.txt", c);
  auto r = read_corpus(dir / "c.txt", true);
  EXPECT_EQ(r.lines, c.lines);
  EXPECT_EQ(r.labels, c.labels);
  std::ofstream(dir / "bad.txt") << "x\tno label\n";
  EXPECT_THROW(read_corpus(dir / "bad.txt", true), InputError);
  EXPECT_THROW(read_corpus(dir / "missing.txt", false), InputError);
}

TEST(Corpus, TopicSidecarIsProjected) {
  auto v = vocab_of({"a b"});
  Dataset ds = make_dataset(v, TextCorpus{{"a", "b"}, {}});
  attach_topics(ds, {{0.0, 1.0}, {0.25, 0.75}});
  EXPECT_EQ(ds.topic_dim(), 2u);
  for (const auto& ex : ds.examples) {
    EXPECT_GT(ex.topic[0], 0.0);
    EXPECT_NEAR(ex.topic[0] + ex.topic[1], 1.0, 1e-15);
  }
  EXPECT_THROW(attach_topics(ds, {{0.5, 0.5}}), InputError);
}

TEST(Corpus, CsvRoundTrip) {
  auto dir = temp_dir("csv");
  std::vector<std::vector<double>> m = {{0.1, 0.9}, {1.0 / 3.0, 2.0 / 3.0}};
  write_csv_matrix(dir / "m.csv", m);
  EXPECT_EQ(read_csv_matrix(dir / "m.csv"), m);
}

TEST(Batching, PaddingIsMinimalAndShifted) {
  auto v = vocab_of({"a b c d"});
  Dataset ds = make_dataset(v, TextCorpus{{"a b", "a b c d", "c"}, {}});
  const std::size_t idx[] = {0, 2};
  auto b = make_batch(ds, idx);
  EXPECT_EQ(b.batch_size, 2u);
  EXPECT_EQ(b.max_len, 4u);  // bos a b eos
  EXPECT_EQ(b.lengths[1], 3u);
  EXPECT_EQ(b.token(1, 3), kPadId);
  EXPECT_EQ(b.target_count(0), 3u);
}

TEST(Batching, EpochCoversEveryExampleOnce) {
  auto s = synthetic_markov_corpus(5, 20, 100, 5, 5);
  std::vector<std::vector<std::string>> docs;
  for (const auto& l : s.train.lines) docs.push_back(tokenize(l));
  auto v = Vocab::build(docs);
  auto ds = make_dataset(v, s.train);
  BatchIterator it(ds, 32, 9);
  EXPECT_EQ(it.batches_per_epoch(), 4u);  // final partial batch kept
  auto order = it.epoch_order(0);
  std::set<std::size_t> seen(order.begin(), order.end());
  EXPECT_EQ(seen.size(), ds.size());
  EXPECT_EQ(order.size(), ds.size());
  EXPECT_EQ(it.epoch_order(0), BatchIterator(ds, 32, 9).epoch_order(0));
  EXPECT_NE(it.epoch_order(0), it.epoch_order(1));
  std::size_t total = 0;
  for (const auto& b : it.epoch(0)) {
    total += b.batch_size;
    std::size_t longest = 0;
    for (auto l : b.lengths) longest = std::max(longest, l);
    EXPECT_EQ(b.max_len, longest);
  }
  EXPECT_EQ(total, ds.size());
}

TEST(Synthetic, SplitSizesAndLengths) {
  auto s = synthetic_markov_corpus(7);
  EXPECT_EQ(s.train.lines.size(), 10000u);
  EXPECT_EQ(s.valid.lines.size(), 1000u);
  EXPECT_EQ(s.test.lines.size(), 1000u);
  std::set<std::string> words;
  std::set<std::size_t> lengths;
  for (const auto* split : {&s.train, &s.valid, &s.test}) {
    for (const auto& l : split->lines) {
      auto t = tokenize(l);
      EXPECT_GE(t.size(), 1u);
      EXPECT_LE(t.size(), 8u);
      lengths.insert(t.size());
      words.insert(t.begin(), t.end());
    }
  }
  EXPECT_EQ(lengths.size(), 8u);
  EXPECT_LE(words.size(), 100u);
  auto again = synthetic_markov_corpus(7);
  EXPECT_EQ(again.train.lines, s.train.lines);
}

TEST(Synthetic, BigramFrequenciesConvergeToTransitions) {
  Rng rng(21);
  auto chain = random_markov_chain(100, rng);
  for (const auto& row : chain.transition) {
    double s = 0.0;
    for (double p : row) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  auto seq = sample_chain(chain, 1000000, rng);
  std::vector<std::vector<double>> counts(100, std::vector<double>(100, 0.0));
  for (std::size_t i = 1; i < seq.size(); ++i) counts[seq[i - 1]][seq[i]] += 1.0;
  for (std::size_t a = 0; a < 100; ++a) {
    double n = 0.0;
    for (double c : counts[a]) n += c;
    double tv = 0.0;
    for (std::size_t b = 0; b < 100; ++b) tv += std::abs(counts[a][b] / n - chain.transition[a][b]);
    EXPECT_LT(0.5 * tv, 0.01 * 10) << "row " << a;  // loose per-row bound at ~10^4 visits per row
  }
}

TEST(Synthetic, ClusterCorpusVocabulariesAreDisjoint) {
  ClusterCorpusOptions o;
  auto s = cluster_corpus(4, o);
  EXPECT_EQ(s.train.lines.size(), o.train);
  for (std::size_t i = 0; i < s.train.lines.size(); ++i) {
    const std::string prefix = "c" + std::to_string(s.train.labels[i]) + "w";
    for (const auto& w : tokenize(s.train.lines[i])) EXPECT_EQ(w.rfind(prefix, 0), 0u);
  }
}
