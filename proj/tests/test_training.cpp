#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "fixtures.hpp"
#include "tvae/errors.hpp"
#include "tvae/training.hpp"

using namespace tvae;
using ad::Tensor;
using fixture::tokenize_splits;
using fixture::toy_config;
using fixture::Variant;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("tvae_training_" + name); }

fixture::TokenizedSplits small_corpus() {
  ClusterCorpusOptions o;
  o.train = 48;
  o.valid = 16;
  o.test = 16;
  return tokenize_splits(cluster_corpus(3, o));
}

ModelConfig small_model(std::size_t vocab, TopicMode topic = TopicMode::none) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.emb = 6;
  c.hidden = 8;
  c.latent = 3;
  c.topic = topic;
  c.topics = topic == TopicMode::none ? 0 : 2;
  c.dropout = 0.2;
  return c;
}

bool same_values(const ModelParams& a, const ModelParams& b) {
  auto x = a.named(), y = b.named();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].first != y[i].first) return false;
    auto u = x[i].second.value(), v = y[i].second.value();
    if (!std::equal(u.begin(), u.end(), v.begin(), v.end())) return false;
  }
  return true;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Tensor> p = {Tensor::parameter({1, 1}, {0.5})};
  ad::backward(ad::sum(p[0]));  // gradient 1
  AdamState s;
  adam_step(p, s, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_NEAR(p[0].value()[0], 0.5 - 1e-3, 1e-9);
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, ZeroGradientWithoutDecayIsNoOp) {
  std::vector<Tensor> p = {Tensor::parameter({1, 3}, {0.1, -2.0, 3.0})};
  AdamState s;
  for (int i = 0; i < 5; ++i) adam_step(p, s, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(p[0].value()[0], 0.1);
  EXPECT_EQ(p[0].value()[1], -2.0);
  EXPECT_EQ(p[0].value()[2], 3.0);
}

TEST(Adam, WeightDecayIsMultiplicative) {
  std::vector<Tensor> p = {Tensor::parameter({1, 1}, {2.0})};
  AdamState s;
  adam_step(p, s, {0.1, 0.9, 0.999, 1e-8, 0.5});
  EXPECT_DOUBLE_EQ(p[0].value()[0], 2.0 * (1.0 - 0.05));
}

TEST(Adam, NonFiniteGradientRejectedWithoutSideEffects) {
  std::vector<Tensor> p = {Tensor::parameter({1, 2}, {1.0, 1.0})};
  // backward() already refuses non-finite gradients, so plant one directly.
  p[0].node()->grad = {std::numeric_limits<double>::quiet_NaN(), 1.0};
  AdamState s;
  EXPECT_THROW(adam_step(p, s, {}), NumericError);
  EXPECT_EQ(p[0].value()[0], 1.0);
  EXPECT_EQ(s.t, 0u);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.kl_weight_override = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  EXPECT_EQ(c.kl_weight(22000), 0.5);
  c.kl_weight_override = 0.3;
  EXPECT_EQ(c.kl_weight(22000), 0.3);
}

TEST(Training, SameSeedSameTrajectory) {
  auto s = small_corpus();
  TrainConfig c;
  c.epochs = 2;
  c.batch = 8;
  c.seed = 11;
  auto a = train(small_model(s.vocab.size()), c, s.train, s.valid);
  auto b = train(small_model(s.vocab.size()), c, s.train, s.valid);
  EXPECT_TRUE(same_values(a.last.params, b.last.params));
  c.seed = 12;
  auto d = train(small_model(s.vocab.size()), c, s.train, s.valid);
  EXPECT_FALSE(same_values(a.last.params, d.last.params));
}

TEST(Training, MetricLogHasOneRowPerEpoch) {
  auto s = small_corpus();
  TrainConfig c;
  c.epochs = 3;
  c.batch = 16;
  std::size_t calls = 0;
  auto r = train(small_model(s.vocab.size()), c, s.train, s.valid, [&](const MetricRow&) { ++calls; });
  EXPECT_EQ(r.log.size(), 3u);
  EXPECT_EQ(calls, 3u);
  EXPECT_EQ(r.log.back().step, 9u);
  EXPECT_GE(r.best_epoch, 1u);
  auto path = temp_path("metrics.csv");
  write_metric_log(path, r.log);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 4u);
}

TEST(Training, ResumeReproducesUninterruptedRun) {
  auto s = small_corpus();
  TrainConfig c;
  c.batch = 8;
  c.seed = 5;
  c.epochs = 1;
  auto first = train(small_model(s.vocab.size(), TopicMode::marginal), c, s.train, s.valid);
  auto path = temp_path("resume.ckpt");
  save_checkpoint(path, first.last, &c);
  auto loaded = load_checkpoint(path);
  ASSERT_TRUE(loaded.train);
  EXPECT_EQ(loaded.train->seed, 5u);
  EXPECT_EQ(loaded.state.step, first.last.step);

  c.epochs = 2;
  auto resumed = resume(loaded.state, c, s.train, s.valid);
  auto straight = train(small_model(s.vocab.size(), TopicMode::marginal), c, s.train, s.valid);
  EXPECT_TRUE(same_values(resumed.last.params, straight.last.params));
  EXPECT_EQ(resumed.last.adam.m, straight.last.adam.m);
  EXPECT_EQ(resumed.last.adam.v, straight.last.adam.v);
}

TEST(Training, ResumeMidEpochMatchesNextStep) {
  auto s = small_corpus();
  TrainConfig c;
  c.batch = 8;
  c.seed = 2;
  auto state = init_state(small_model(s.vocab.size()), c);
  const BatchIterator it(s.train, c.batch, derive_seed(c.seed, "shuffle"));
  auto batches = it.epoch(0);
  train_step(state, batches[0], c);
  auto path = temp_path("mid.ckpt");
  save_checkpoint(path, state, &c);
  auto copy = load_checkpoint(path).state;
  auto a = train_step(state, batches[1], c);
  auto b = train_step(copy, batches[1], c);
  EXPECT_EQ(a.total.item(), b.total.item());
  EXPECT_TRUE(same_values(state.params, copy.params));
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  auto p = init_params(toy_config(Variant::joint, true), 4);
  TrainState st{p, {}, 17};
  auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, st);
  auto back = load_checkpoint(path);
  EXPECT_FALSE(back.train);
  EXPECT_EQ(back.state.step, 17u);
  EXPECT_EQ(back.state.params.config.topic, TopicMode::joint);
  EXPECT_EQ(back.state.params.config.vocab_size, 10u);
  EXPECT_TRUE(same_values(p, back.state.params));
  EXPECT_THROW(load_checkpoint(temp_path("missing.ckpt")), InputError);
}

TEST(Evaluate, UniformModelHasPerplexityEqualToVocabulary) {
  auto s = small_corpus();
  auto p = init_params(small_model(s.vocab.size()), 1);
  for (auto& v : p.output.weight.mutable_value()) v = 0.0;
  for (auto& v : p.output.bias.mutable_value()) v = 0.0;
  auto r = evaluate(p, s.test);
  EXPECT_NEAR(r.ppl(), static_cast<double>(s.vocab.size()), 1e-9 * static_cast<double>(s.vocab.size()));
  EXPECT_NEAR(r.nll_total / static_cast<double>(r.token_count), std::log(static_cast<double>(s.vocab.size())), 1e-12);
}

TEST(Evaluate, DeterministicAndAdditiveOverShards) {
  auto s = small_corpus();
  auto p = init_params(small_model(s.vocab.size(), TopicMode::marginal), 3);
  auto full = evaluate(p, s.test);
  auto again = evaluate(p, s.test);
  EXPECT_EQ(full.nll_total, again.nll_total);
  Dataset a, b;
  a.num_classes = b.num_classes = s.test.num_classes;
  for (std::size_t i = 0; i < s.test.size(); ++i) (i < 7 ? a : b).examples.push_back(s.test.examples[i]);
  auto sum = evaluate(p, a, kEvalSeed, 5);
  sum += evaluate(p, b, kEvalSeed, 3);
  EXPECT_NEAR(sum.nll_total, full.nll_total, 1e-9 * full.nll_total);
  EXPECT_NEAR(sum.kl_z_total, full.kl_z_total, 1e-9 * full.kl_z_total);
  EXPECT_NEAR(sum.kl_t_total, full.kl_t_total, 1e-9 * full.kl_t_total);
  EXPECT_EQ(sum.token_count, full.token_count);
  EXPECT_EQ(sum.examples, full.examples);
}

TEST(Evaluate, VocabularyMismatchIsRejected) {
  auto s = small_corpus();
  auto p = init_params(small_model(s.vocab.size() - 5), 1);
  EXPECT_THROW(evaluate(p, s.test), InputError);
}

TEST(Training, OverfitsSingleExample) {
  Vocab v = Vocab::from_tokens({"the", "quick", "brown", "fox", "jumps"});
  Dataset one = make_dataset(v, TextCorpus{{"the quick brown fox jumps over the fox"}, {}});
  auto cfg = small_model(v.size());
  cfg.dropout = 0.0;
  TrainConfig c;
  c.lr = 1e-2;
  c.weight_decay = 0.0;
  c.epochs = 400;
  c.batch = 1;
  auto r = train(cfg, c, one, one);
  const double tokens = static_cast<double>(one.examples[0].ids.size() - 1);
  EXPECT_LT(r.log.back().recon_nll / tokens, 0.1);
}

TEST(Training, JointModeNeedsTopics) {
  auto s = small_corpus();
  TrainConfig c;
  c.epochs = 1;
  EXPECT_THROW(train(small_model(s.vocab.size(), TopicMode::joint), c, s.train, s.valid), InputError);
}
