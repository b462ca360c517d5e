#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <algorithm>

#include "gradcheck.hpp"
#include "tvae/autodiff.hpp"
#include "tvae/errors.hpp"

using namespace tvae;
using ad::Tensor;
using fixture::check_gradients;
using fixture::random_param;

namespace {

constexpr double kPrimitiveTol = 1e-4;

}  // namespace

TEST(Autodiff, SoftmaxOfEqualLogitsIsUniform) {
  auto s = ad::softmax(Tensor::constant({1, 2}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(s.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(0, 1), 0.5);
}

TEST(Autodiff, LgammaAndDigammaAtOne) {
  auto x = Tensor::constant({1, 1}, 1.0);
  EXPECT_NEAR(ad::lgamma(x).item(), 0.0, 1e-14);
  EXPECT_NEAR(ad::digamma(x).item(), -0.5772156649015329, 1e-12);
}

TEST(Autodiff, IdentityMatmulReturnsOperand) {
  Rng rng(1);
  auto a = random_param(3, 5, rng);
  auto eye = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto out = ad::matmul(eye, a);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(out.value()[i], a.value()[i]);
}

TEST(Autodiff, SquaredSumGradient) {
  auto w = Tensor::parameter({1, 2}, {1.0, 2.0});
  ad::backward(ad::sum(ad::mul(w, w)));
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], 4.0);
}

TEST(Autodiff, SigmoidGradientAtZero) {
  auto x = Tensor::parameter({1, 1}, {0.0});
  ad::backward(ad::sum(ad::sigmoid(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Autodiff, GradientsAccumulateAcrossFanOut) {
  auto x = Tensor::parameter({1, 1}, {3.0});
  auto y = ad::add(ad::mul(x, x), x);  // x used three times
  ad::backward(ad::sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Autodiff, LeafGradientsAccumulateAcrossBackwardCalls) {
  auto x = Tensor::parameter({1, 1}, {2.0});
  ad::backward(ad::sum(ad::scale(x, 3.0)));
  ad::backward(ad::sum(ad::scale(x, 3.0)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Autodiff, SecondBackwardOnSameGraphIsRejected) {
  auto x = Tensor::parameter({1, 1}, {2.0});
  auto loss = ad::sum(ad::exp(x));
  ad::backward(loss);
  EXPECT_THROW(ad::backward(loss), ContractError);
}

TEST(Autodiff, ReusingDifferentiatedNodesIsRejected) {
  auto x = Tensor::parameter({1, 1}, {2.0});
  auto y = ad::exp(x);
  ad::backward(ad::sum(y));
  EXPECT_THROW(ad::add(y, x), ContractError);
}

TEST(Autodiff, NonScalarLossIsRejected) {
  auto x = Tensor::parameter({1, 2}, {1.0, 2.0});
  EXPECT_THROW(ad::backward(ad::exp(x)), ContractError);
}

TEST(Autodiff, ShapeMismatchIsDimensionError) {
  auto a = Tensor::constant({2, 3}, 1.0);
  auto b = Tensor::constant({3, 2}, 1.0);
  EXPECT_THROW(ad::add(a, b), DimensionError);
  EXPECT_THROW(ad::matmul(a, a), DimensionError);
  EXPECT_THROW(ad::concat({a, Tensor::constant({3, 1}, 0.0)}), DimensionError);
  const int bad[] = {5};
  EXPECT_THROW(ad::embedding(Tensor::constant({4, 2}, 0.0), bad), DimensionError);
}

TEST(Autodiff, NonFiniteValuesAreRejected) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(Tensor::constant({1, 1}, inf), NumericError);
  EXPECT_THROW(Tensor::constant({1, 2}, {0.0, std::nan("")}), NumericError);
  EXPECT_THROW(ad::exp(Tensor::constant({1, 1}, 1000.0)), NumericError);
  EXPECT_THROW(ad::log(Tensor::constant({1, 1}, 0.0)), NumericError);
}

TEST(Autodiff, TapeIsTopologicalAndVisitsEachNodeOnce) {
  auto x = Tensor::parameter({1, 2}, {0.3, -0.4});
  auto a = ad::tanh(x);
  auto b = ad::mul(a, a);
  auto c = ad::add(b, a);
  auto loss = ad::sum(c);
  auto tape = ad::Tape::record(loss);
  std::vector<ad::Node*> order(tape.order().begin(), tape.order().end());
  EXPECT_EQ(order.size(), 5u);  // x, a, b, c, loss
  std::set<ad::Node*> unique(order.begin(), order.end());
  EXPECT_EQ(unique.size(), order.size());
  auto pos = [&](const Tensor& t) { return std::find(order.begin(), order.end(), t.node()) - order.begin(); };
  EXPECT_LT(pos(x), pos(a));
  EXPECT_LT(pos(a), pos(b));
  EXPECT_LT(pos(b), pos(c));
  EXPECT_LT(pos(c), pos(loss));
}

TEST(Autodiff, DropoutEvalModeIsExactIdentity) {
  Rng rng(3);
  auto a = random_param(4, 6, rng);
  auto out = ad::dropout(a, 0.5, false, nullptr);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(out.value()[i], a.value()[i]);
}

TEST(Autodiff, DropoutTrainModeZeroesOrRescales) {
  Rng rng(4);
  auto a = Tensor::constant({50, 40}, 1.0);
  auto out = ad::dropout(a, 0.25, true, &rng);
  std::size_t zeros = 0;
  for (double v : out.value()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 2000.0, 0.25, 0.05);
}

TEST(Autodiff, DropoutRejectsBadProbability) {
  Rng rng(5);
  auto a = Tensor::constant({2, 2}, 1.0);
  EXPECT_THROW(ad::dropout(a, 1.0, true, &rng), DomainError);
  EXPECT_THROW(ad::dropout(a, -0.1, true, &rng), DomainError);
  EXPECT_THROW(ad::dropout(a, 0.5, true, nullptr), ContractError);
}

// ---- finite-difference checks of every primitive ------------------------

class PrimitiveGrad : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PrimitiveGrad, BinaryAndLinearOps) {
  Rng rng(GetParam());
  auto a = random_param(3, 4, rng);
  auto b = random_param(3, 4, rng);
  auto c = random_param(4, 2, rng);
  auto row = random_param(1, 4, rng);
  auto col = random_param(3, 1, rng);
  auto pos = random_param(3, 4, rng, 0.5, 2.0);
  EXPECT_LT(check_gradients([&] { return ad::matmul(a, c); }, {a, c}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::add(a, b); }, {a, b}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::sub(a, b); }, {a, b}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::mul(a, b); }, {a, b}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::div(a, pos); }, {a, pos}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::scale(a, -1.7); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::add_scalar(a, 0.3); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::add_row(a, row); }, {a, row}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::mul_col(a, col); }, {a, col}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::transpose(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::reshape(a, {2, 6}); }, {a}).max_rel, kPrimitiveTol);
}

TEST_P(PrimitiveGrad, ShapeOps) {
  Rng rng(GetParam());
  auto a = random_param(3, 4, rng);
  auto b = random_param(3, 2, rng);
  auto d = random_param(2, 4, rng);
  EXPECT_LT(check_gradients([&] { return ad::concat({a, b}); }, {a, b}).max_rel, kPrimitiveTol);
  const Tensor parts[] = {a, d};
  EXPECT_LT(check_gradients([&] { return ad::concat_rows(parts); }, {a, d}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::slice_cols(a, 1, 2); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::slice_rows(a, 1, 2); }, {a}).max_rel, kPrimitiveTol);
  const int cols[] = {3, 0, 3};
  EXPECT_LT(check_gradients([&] { return ad::gather_cols(a, cols); }, {a}).max_rel, kPrimitiveTol);
  const int ids[] = {2, 0, 2, 1};
  EXPECT_LT(check_gradients([&] { return ad::embedding(a, ids); }, {a}).max_rel, kPrimitiveTol);
  const std::vector<double> mask = {1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0};
  auto e = random_param(3, 4, rng);
  EXPECT_LT(check_gradients([&] { return ad::blend(mask, a, e); }, {a, e}).max_rel, kPrimitiveTol);
}

TEST_P(PrimitiveGrad, ElementwiseNonlinearities) {
  Rng rng(GetParam());
  auto a = random_param(3, 4, rng, -2.0, 2.0);
  auto pos = random_param(3, 4, rng, 0.3, 4.0);
  EXPECT_LT(check_gradients([&] { return ad::sigmoid(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::tanh(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::exp(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::log(pos); }, {pos}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::lgamma(pos); }, {pos}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::digamma(pos); }, {pos}).max_rel, kPrimitiveTol);
  // Keep entries away from the clamp boundaries where the derivative jumps.
  auto inside = random_param(3, 4, rng, -0.8, 0.8);
  EXPECT_LT(check_gradients([&] { return ad::clamp(inside, -0.9, 0.9); }, {inside}).max_rel, kPrimitiveTol);
}

TEST_P(PrimitiveGrad, RowwiseAndReductions) {
  Rng rng(GetParam());
  auto a = random_param(3, 5, rng, -2.0, 2.0);
  auto pos = random_param(3, 5, rng, 0.2, 1.0);
  EXPECT_LT(check_gradients([&] { return ad::softmax(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::log_softmax(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::normalize_rows(pos); }, {pos}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::sum(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::mean(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::sum_rows(a); }, {a}).max_rel, kPrimitiveTol);
  EXPECT_LT(check_gradients([&] { return ad::sum_cols(a); }, {a}).max_rel, kPrimitiveTol);
}

TEST_P(PrimitiveGrad, DropoutWithFixedMask) {
  Rng rng(GetParam());
  auto a = random_param(4, 4, rng);
  const auto mask_seed = GetParam() + 100;
  EXPECT_LT(check_gradients(
                [&] {
                  Rng r(mask_seed);
                  return ad::dropout(a, 0.3, true, &r);
                },
                {a})
                .max_rel,
            kPrimitiveTol);
}

TEST_P(PrimitiveGrad, CompositeGraph) {
  Rng rng(GetParam());
  auto w = random_param(4, 3, rng);
  auto x = random_param(2, 4, rng);
  auto b = random_param(1, 3, rng);
  auto f = [&] {
    auto h = ad::tanh(ad::add_row(ad::matmul(x, w), b));
    auto s = ad::log_softmax(ad::concat({h, ad::sigmoid(h)}));
    return ad::sum_rows(ad::mul(ad::slice_cols(s, 1, 3), ad::exp(ad::scale(h, 0.1)) * h));
  };
  EXPECT_LT(check_gradients(f, {w, x, b}).max_rel, kPrimitiveTol);
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGrad, ::testing::Values(1u, 2u, 3u, 4u, 5u));
