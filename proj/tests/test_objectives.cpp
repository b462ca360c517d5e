#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "tvae/errors.hpp"
#include "tvae/objectives.hpp"
#include "tvae/optim.hpp"

using namespace tvae;
using ad::Tensor;
using fixture::toy_batch;
using fixture::toy_config;
using fixture::Variant;

namespace {

void zero(Tensor t) {
  for (auto& v : t.mutable_value()) v = 0.0;
}

void zero_output_layer(const Mlp& m) {
  zero(m.second.weight);
  zero(m.second.bias);
}

LossBreakdown loss_for(Variant v, const ModelParams& p, const CorpusBatch& b, const LatentNoise& n,
                       std::size_t step) {
  switch (v) {
    case Variant::vae: return loss_vae(p, b, n, step);
    case Variant::cvae: return loss_cvae(p, b, n, step);
    case Variant::joint: return loss_joint(p, b, n, step);
    case Variant::marginal: return loss_marginal(p, b, n, step);
  }
  throw std::logic_error("variant");
}

class PerVariant : public ::testing::TestWithParam<Variant> {};

std::string variant_label(const ::testing::TestParamInfo<Variant>& info) {
  return fixture::variant_name(info.param);
}

const auto kVariants = ::testing::Values(Variant::vae, Variant::cvae, Variant::joint, Variant::marginal);

}  // namespace

TEST(Annealing, ScheduleEndpointsAndMidpoint) {
  EXPECT_EQ(anneal_weight(0), 0.0);
  EXPECT_EQ(anneal_weight(2000), 0.0);
  EXPECT_EQ(anneal_weight(22000), 0.5);
  EXPECT_EQ(anneal_weight(42000), 1.0);
  EXPECT_EQ(anneal_weight(1000000), 1.0);
  EXPECT_EQ(anneal_weight(12000), 0.25);
  for (std::size_t s = 2000; s < 42000; s += 997) EXPECT_LE(anneal_weight(s), anneal_weight(s + 1));
}

TEST_P(PerVariant, ZeroWeightLeavesOnlyLikelihoodTerms) {
  auto p = init_params(toy_config(GetParam()), 3);
  auto batch = toy_batch();
  Rng rng(5);
  auto noise = LatentNoise::draw(p.config, batch.batch_size, rng);
  auto out = loss_for(GetParam(), p, batch, noise, 0);
  EXPECT_EQ(out.anneal_weight, 0.0);
  EXPECT_GT(out.kl_z, 0.0);  // reported unannealed
  double expected = out.recon_nll;
  if (GetParam() == Variant::joint) expected += out.topic_term;
  EXPECT_NEAR(out.total.item(), expected, 1e-12 * std::abs(expected));
}

TEST_P(PerVariant, TotalCombinesTermsAtFullWeight) {
  auto p = init_params(toy_config(GetParam()), 4);
  auto batch = toy_batch();
  Rng rng(6);
  auto noise = LatentNoise::draw(p.config, batch.batch_size, rng);
  auto out = loss_for(GetParam(), p, batch, noise, 50000);
  EXPECT_EQ(out.anneal_weight, 1.0);
  const double expected = out.recon_nll + out.kl_z + out.topic_term;
  EXPECT_NEAR(out.total.item(), expected, 1e-12 * std::abs(expected));
}

TEST_P(PerVariant, EndToEndGradientWithCommonNoise) {
  auto p = init_params(toy_config(GetParam(), true), 7);
  auto batch = toy_batch();
  Rng rng(8);
  auto noise = LatentNoise::draw(p.config, batch.batch_size, rng);
  LossOptions o{0.7, true};
  auto err = fixture::check_gradients([&] { return compute_loss(p, batch, noise, o, {}).total; }, p.tensors());
  EXPECT_LT(err.norm_rel, 1e-3);
}

TEST_P(PerVariant, LossDecreasesOverTraining) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto p = init_params(toy_config(GetParam()), seed);
    auto params = p.tensors();
    AdamState state;
    AdamConfig cfg;
    cfg.lr = 1e-2;
    auto batch = toy_batch();
    Rng rng(seed * 31);
    auto window = [&](std::size_t steps, bool update) {
      double acc = 0.0;
      for (std::size_t i = 0; i < steps; ++i) {
        auto noise = LatentNoise::draw(p.config, batch.batch_size, rng);
        auto out = compute_loss(p, batch, noise, {1.0, true}, {});
        acc += out.total.item();
        if (update) {
          p.zero_grad();
          ad::backward(out.total);
          adam_step(params, state, cfg);
        }
      }
      return acc / static_cast<double>(steps);
    };
    const double before = window(20, false);
    window(200, true);
    const double after = window(20, false);
    EXPECT_LT(after, before) << "seed " << seed;
  }
}

TEST_P(PerVariant, WrongModeIsContractError) {
  auto batch = toy_batch();
  for (Variant other : {Variant::vae, Variant::cvae, Variant::joint, Variant::marginal}) {
    if (other == GetParam()) continue;
    auto p = init_params(toy_config(other), 1);
    Rng rng(2);
    auto noise = LatentNoise::draw(p.config, batch.batch_size, rng);
    EXPECT_THROW(loss_for(GetParam(), p, batch, noise, 0), ContractError);
  }
}

INSTANTIATE_TEST_SUITE_P(Objectives, PerVariant, kVariants, variant_label);

TEST(Objectives, StandardPosteriorHasZeroKl) {
  auto p = init_params(toy_config(Variant::vae), 2);
  zero_output_layer(p.mlp_mu);
  zero_output_layer(p.mlp_log_var);
  Rng rng(1);
  auto batch = toy_batch();
  auto out = loss_vae(p, batch, LatentNoise::draw(p.config, 2, rng), 50000);
  EXPECT_EQ(out.kl_z, 0.0);
}

TEST(Objectives, ConditionalPriorMatchingPosteriorHasZeroKl) {
  auto p = init_params(toy_config(Variant::cvae), 2);
  zero_output_layer(p.mlp_mu);
  zero_output_layer(p.mlp_log_var);
  zero_output_layer(*p.mlp_prior_z);
  Rng rng(1);
  auto batch = toy_batch();
  auto out = loss_cvae(p, batch, LatentNoise::draw(p.config, 2, rng), 50000);
  EXPECT_NEAR(out.kl_z, 0.0, 1e-15);
  batch.labels.clear();
  EXPECT_THROW(loss_cvae(p, batch, LatentNoise::draw(p.config, 2, rng), 0), InputError);
}

TEST(Objectives, UniformTopicPriorGivesLogTwoForThreeTopics) {
  auto p = init_params(toy_config(Variant::joint), 2);
  zero_output_layer(*p.mlp_alpha);
  Rng rng(1);
  auto out = loss_joint(p, toy_batch(), LatentNoise::draw(p.config, 2, rng), 0);
  for (double r : out.topic_rows) EXPECT_NEAR(-r, std::log(2.0), 1e-12);
  EXPECT_NEAR(out.total.item(), out.recon_nll - std::log(2.0), 1e-12);
}

TEST(Objectives, JointRequiresTopicVectors) {
  auto p = init_params(toy_config(Variant::joint), 2);
  auto ex = fixture::toy_examples();
  for (auto& e : ex) e.topic.clear();
  Rng rng(1);
  EXPECT_THROW(loss_joint(p, make_batch(ex), LatentNoise::draw(p.config, 2, rng), 0), InputError);
}

TEST(Objectives, TiedTopicPosteriorAndPriorHaveZeroKl) {
  auto p = init_params(toy_config(Variant::marginal), 2);
  zero_output_layer(*p.mlp_alpha);
  zero_output_layer(*p.mlp_alpha_post);
  Rng rng(1);
  auto out = loss_marginal(p, toy_batch(), LatentNoise::draw(p.config, 2, rng), 0);
  for (double r : out.topic_rows) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(Objectives, BowWithUniformLogitsCostsLogVocabularyPerToken) {
  auto p = init_params(toy_config(Variant::vae, true), 2);
  zero_output_layer(*p.mlp_bow);
  auto batch = toy_batch();
  auto loss = bow_loss(p, Tensor::constant({2, 2}, 0.4), nullptr, batch);
  EXPECT_NEAR(loss.at(0, 0), 4.0 * std::log(10.0), 1e-12);
  EXPECT_NEAR(loss.at(1, 0), 3.0 * std::log(10.0), 1e-12);
}

TEST(Objectives, BowIgnoresTokenOrder) {
  auto p = init_params(toy_config(Variant::joint, true), 3);
  auto ex = fixture::toy_examples();
  auto shuffled = ex;
  shuffled[0].ids = {kBosId, 5, 6, 5, 4, kEosId};
  shuffled[1].ids = {kBosId, 9, 7, 8, kEosId};
  Rng rng(2);
  auto z = fixture::random_param(2, 2, rng);
  auto t = Tensor::constant({2, 3}, {0.2, 0.3, 0.5, 0.6, 0.2, 0.2});
  auto a = bow_loss(p, z, &t, make_batch(ex));
  auto b = bow_loss(p, z, &t, make_batch(shuffled));
  EXPECT_NEAR(a.at(0, 0), b.at(0, 0), 1e-12);
  EXPECT_NEAR(a.at(1, 0), b.at(1, 0), 1e-12);
}

TEST(Objectives, BowHeadGradient) {
  auto p = init_params(toy_config(Variant::marginal, true), 5);
  auto batch = toy_batch();
  Rng rng(4);
  auto z = fixture::random_param(2, 2, rng);
  auto t = fixture::random_param(2, 3, rng, 0.1, 0.5);
  std::vector<Tensor> inputs = {z, t, p.mlp_bow->first.weight, p.mlp_bow->second.weight, p.mlp_bow->second.bias};
  auto err = fixture::check_gradients([&] { return bow_loss(p, z, &t, batch); }, inputs);
  EXPECT_LT(err.max_rel, 1e-4);
}

TEST(Objectives, SingleSampleEstimateIsUnbiased) {
  auto p = init_params(toy_config(Variant::vae), 9);
  auto batch = toy_batch();
  auto feat = recognition_features(p, encode(p, batch, {}), batch);
  auto q = posterior_z(p, feat, nullptr);
  const double kl = ad::mean(kl_gaussian_std(q)).item();

  constexpr std::size_t kDraws = 10000;
  Rng loss_rng(1), direct_rng(2);
  std::vector<double> losses, direct;
  for (std::size_t i = 0; i < kDraws; ++i) {
    losses.push_back(compute_loss(p, batch, LatentNoise::draw(p.config, 2, loss_rng), {1.0, false}, {}).total.item());
    std::vector<double> eps(4);
    for (auto& e : eps) e = standard_normal(direct_rng);
    auto z = gaussian_sample(q, eps);
    direct.push_back(ad::mean(decode_teacher_forced(p, latent_code(p, z, nullptr, {}), batch, {}).nll).item() + kl);
  }
  auto stats = [](const std::vector<double>& x) {
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double v = 0.0;
    for (double xi : x) v += (xi - m) * (xi - m);
    return std::pair{m, v / static_cast<double>(x.size() - 1) / static_cast<double>(x.size())};
  };
  auto [ma, va] = stats(losses);
  auto [mb, vb] = stats(direct);
  EXPECT_LT(std::abs(ma - mb), 3.0 * std::sqrt(va + vb));
}

TEST(Objectives, ImportanceEstimateBoundsElbo) {
  for (Variant v : {Variant::vae, Variant::marginal}) {
    auto p = init_params(toy_config(v), 11);
    auto batch = toy_batch();
    Rng rng(3);
    double elbo = 0.0;
    for (int i = 0; i < 2000; ++i) {
      elbo -= compute_loss(p, batch, LatentNoise::draw(p.config, 2, rng), {1.0, false}, {}).total.item();
    }
    elbo /= 2000.0;
    auto ll = importance_log_likelihood(p, batch, 2000, rng);
    EXPECT_LE(elbo, 0.5 * (ll[0] + ll[1])) << fixture::variant_name(v);
  }
}
