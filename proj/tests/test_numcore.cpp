#include <gtest/gtest.h>

#include <cmath>

#include "posefront/errors.hpp"
#include "posefront/numcore.hpp"
#include "test_util.hpp"

namespace posefront {
namespace {

using testing::random_tensor;

TEST(Rng, SplitmixMatchesReferenceOutput) {
  std::uint64_t state = 0;
  EXPECT_EQ(splitmix64(state), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(splitmix64(state), 0x6e789e6aa1b965f4ULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(Rng, SplitDependsOnlyOnSeedAndStream) {
  Rng a(7);
  for (int i = 0; i < 10; ++i) a();
  Rng b(7);
  Rng sa = a.split(3), sb = b.split(3), other = b.split(4);
  const auto x = sa();
  EXPECT_EQ(x, sb());
  EXPECT_NE(x, other());
}

TEST(Rng, BelowStaysInRangeAndUniformIsHalfOpen) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    ASSERT_LT(rng.below(7), 7u);
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMomentsAreClose) {
  Rng rng(5);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Tensor, ZeroDimensionsAreRejected) {
  EXPECT_THROW(Tensor(0), DimensionError);
  EXPECT_THROW(Tensor(0, 3), DimensionError);
  EXPECT_THROW(Tensor(2, 0), DimensionError);
  EXPECT_THROW(Tensor::from({}), DimensionError);
}

TEST(Tensor, FromRowsIsRowMajor) {
  const Tensor m = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rank(), 2);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m[5], 6.0);
  EXPECT_THROW(Tensor::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST(Affine, IdentityWeightsReturnInput) {
  const Tensor y = affine_forward(Tensor::from_rows({{1, 0}, {0, 1}}), Tensor::from({0, 0}), Tensor::from({3, 4}));
  EXPECT_EQ(y, Tensor::from({3, 4}));
}

TEST(Affine, HandComputedProduct) {
  const Tensor y = affine_forward(Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from({1, 1}), Tensor::from({1, 1}));
  EXPECT_EQ(y, Tensor::from({4, 8}));
}

TEST(Affine, ZeroWeightsPassBiasThrough) {
  const Tensor y = affine_forward(Tensor::from_rows({{0, 0}}), Tensor::from({5}), Tensor::from({7, 9}));
  EXPECT_EQ(y, Tensor::from({5}));
}

TEST(Affine, ShapeMismatchThrows) {
  const Tensor w = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_THROW(affine_forward(w, Tensor::from({1, 1}), Tensor::from({1, 1, 1})), DimensionError);
  EXPECT_THROW(affine_forward(w, Tensor::from({1}), Tensor::from({1, 1})), DimensionError);
  EXPECT_THROW(affine_forward(Tensor::from({1, 2}), Tensor::from({1}), Tensor::from({1, 1})), DimensionError);
}

TEST(Affine, NonFiniteInputIsAnError) {
  EXPECT_THROW(affine_forward(Tensor::from_rows({{1}}), Tensor::from({0}), Tensor::from({NAN})), NumericError);
}

TEST(Relu, ForwardExamples) {
  EXPECT_EQ(relu_forward(Tensor::from({-1, 0, 2})), Tensor::from({0, 0, 2}));
  EXPECT_EQ(relu_forward(Tensor::from({0, 0})), Tensor::from({0, 0}));
  EXPECT_EQ(relu_forward(Tensor::from({3.5})), Tensor::from({3.5}));
}

TEST(Relu, BackwardGatesBySign) {
  EXPECT_EQ(relu_backward(Tensor::from({-1, 2}), Tensor::from({1, 1})), Tensor::from({0, 1}));
  EXPECT_EQ(relu_backward(Tensor::from({0.0}), Tensor::from({1})), Tensor::from({0}));
}

TEST(Affine, BackwardIsOuterProduct) {
  AffineLayer layer(Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from({0, 0}));
  AffineLayer::Cache cache;
  layer.forward(Tensor::from({1, 0}), &cache);
  const Tensor dx = layer.backward(cache, Tensor::from({1, 1}));
  EXPECT_EQ(layer.weight().grad, Tensor::from_rows({{1, 0}, {1, 0}}));
  EXPECT_EQ(layer.bias().grad, Tensor::from({1, 1}));
  EXPECT_EQ(dx, Tensor::from({4, 6}));
}

TEST(Affine, BackwardAccumulatesAcrossCalls) {
  Rng rng(3);
  AffineLayer layer(4, 3, rng);
  AffineLayer::Cache c1, c2;
  const Tensor x1 = random_tensor(4, rng), x2 = random_tensor(4, rng);
  const Tensor u1 = random_tensor(3, rng), u2 = random_tensor(3, rng);
  layer.forward(x1, &c1);
  layer.forward(x2, &c2);
  layer.backward(c1, u1);
  const Tensor after_one = layer.weight().grad;
  layer.backward(c2, u2);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_NEAR(layer.weight().grad(r, c), after_one(r, c) + u2[r] * x2[c], 1e-15);
}

TEST(Affine, BackwardWithoutForwardIsStateError) {
  Rng rng(3);
  AffineLayer layer(2, 2, rng);
  EXPECT_THROW(layer.backward(AffineLayer::Cache{}, Tensor::from({1, 1})), StateError);
}

TEST(Hadamard, ForwardAndBackward) {
  EXPECT_EQ(hadamard(Tensor::from({1, 2, 3}), Tensor::from({4, 5, 6})), Tensor::from({4, 10, 18}));
  EXPECT_EQ(hadamard_backward(Tensor::from({4, 5, 6}), Tensor::from({1, 1, 2})), Tensor::from({4, 5, 12}));
  EXPECT_THROW(hadamard(Tensor::from({1}), Tensor::from({1, 2})), DimensionError);
}

TEST(Sgd, VanillaStep) {
  Param p(Tensor::from({1.0}));
  p.grad[0] = 2.0;
  Param* ps[] = {&p};
  sgd_step(ps, SgdConfig{0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(p.value[0], 0.8);
}

TEST(Sgd, MomentumHandRecursion) {
  // buf1 = 1, v1 = -0.1; buf2 = 0.9 + 1 = 1.9, v2 = -0.1 - 0.19.
  Param p(Tensor::from({0.0}));
  Param* ps[] = {&p};
  for (int step = 0; step < 2; ++step) {
    p.grad[0] = 1.0;
    sgd_step(ps, SgdConfig{0.1, 0.9, 0.0});
  }
  EXPECT_NEAR(p.value[0], -0.29, 1e-15);
}

TEST(Sgd, ZeroGradientDecaysMomentumOnly) {
  Param p(Tensor::from({2.0}));
  p.momentum[0] = 1.0;
  Param* ps[] = {&p};
  sgd_step(ps, SgdConfig{0.1, 0.9, 0.0});
  EXPECT_DOUBLE_EQ(p.momentum[0], 0.9);
  EXPECT_DOUBLE_EQ(p.value[0], 2.0 - 0.1 * 0.9);
}

TEST(Sgd, WeightDecayFoldsIntoGradient) {
  Param p(Tensor::from({2.0}));
  p.grad[0] = 1.0;
  Param* ps[] = {&p};
  sgd_step(ps, SgdConfig{0.5, 0.0, 0.1});
  EXPECT_DOUBLE_EQ(p.value[0], 2.0 - 0.5 * (1.0 + 0.1 * 2.0));
}

TEST(Sgd, PlainStepIsExactOnRandomValues) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Param p(random_tensor(5, rng));
    p.grad = random_tensor(5, rng);
    const double lr = rng.uniform(0.001, 1.0);
    Tensor expected = p.value;
    for (std::size_t i = 0; i < 5; ++i) expected[i] = p.value[i] - lr * p.grad[i];
    Param* ps[] = {&p};
    sgd_step(ps, SgdConfig{lr, 0.0, 0.0});
    ASSERT_EQ(p.value, expected);
  }
}

TEST(Sgd, ConfigValidation) {
  EXPECT_THROW(SgdConfig({-0.1, 0.9, 0.0}).validate(), ValidationError);
  EXPECT_NO_THROW(SgdConfig({0.0, 0.9, 0.0}).validate());
  EXPECT_THROW(SgdConfig({0.1, 1.0, 0.0}).validate(), ValidationError);
  EXPECT_THROW(SgdConfig({0.1, 0.9, -1.0}).validate(), ValidationError);
  EXPECT_NO_THROW(SgdConfig{}.validate());
}

TEST(Param, StartsWithZeroGradAndMomentum) {
  Param p(Tensor::from_rows({{1, 2}, {3, 4}}));
  EXPECT_TRUE(p.grad.same_shape(p.value));
  EXPECT_TRUE(p.momentum.same_shape(p.value));
  for (double v : p.grad.values()) EXPECT_EQ(v, 0.0);
  for (double v : p.momentum.values()) EXPECT_EQ(v, 0.0);
}

TEST(Glorot, WithinBoundAndBiasesZero) {
  Rng rng(2);
  AffineLayer layer(30, 20, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  for (double v : layer.weight().value.values()) EXPECT_LE(std::abs(v), bound);
  for (double v : layer.bias().value.values()) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDifference, Square) {
  const auto f = [](const Tensor& x) { return x[0] * x[0]; };
  EXPECT_NEAR(finite_difference_grad(f, Tensor::from({3.0}), 1e-5)[0], 6.0, 1e-8);
}

TEST(FiniteDifference, ConstantAndLinear) {
  Rng rng(4);
  const Tensor x = random_tensor(6, rng);
  const Tensor zero = finite_difference_grad([](const Tensor&) { return 1.5; }, x, 1e-5);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  const auto sum = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v;
    return s;
  };
  const Tensor ones = finite_difference_grad(sum, x, 1e-5);
  for (double v : ones.values()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDifference, NonFiniteValueIsNumericError) {
  const auto f = [](const Tensor& x) { return std::log(x[0]); };
  EXPECT_THROW(finite_difference_grad(f, Tensor::from({0.0}), 1e-5), NumericError);
  EXPECT_THROW(finite_difference_grad(f, Tensor::from({1.0}), 0.0), DomainError);
}

TEST(RelativeError, ScaleFreeAndZeroSafe) {
  const std::vector<double> a{1.0, 2.0}, b{1.0, 2.0}, z{0.0, 0.0};
  EXPECT_EQ(relative_error(a, b), 0.0);
  EXPECT_EQ(relative_error(z, z), 0.0);
  const std::vector<double> neg{-1.0, -2.0};
  EXPECT_DOUBLE_EQ(relative_error(a, neg), 2.0);
}

TEST(ClipGradNorm, RescalesOnlyAboveLimit) {
  Param a(Tensor::from({0.0, 0.0})), b(Tensor::from({0.0}));
  a.grad = Tensor::from({3.0, 0.0});
  b.grad = Tensor::from({4.0});
  Param* ps[] = {&a, &b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 5.0);
  EXPECT_EQ(a.grad[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
}

TEST(GradientOracle, KernelsAgreeWithFiniteDifferences) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = 1 + rng.below(6), out = 1 + rng.below(6);
    const Tensor w = testing::random_matrix(out, in, rng), b = random_tensor(out, rng);
    const Tensor x = random_tensor(in, rng), c = random_tensor(out, rng);
    Param pw(w), pb(b);
    const Tensor dx = affine_backward(pw, pb, x, c);
    const auto f = [&](const Tensor& v) { return dot(affine_forward(w, b, v).values(), c.values()); };
    ASSERT_LT(relative_error(dx.values(), finite_difference_grad(f, x, 1e-5).values()), 1e-6);
  }
}

}  // namespace
}  // namespace posefront
