#include <gtest/gtest.h>

#include <cmath>

#include "posefront/errors.hpp"
#include "posefront/progressive.hpp"
#include "test_util.hpp"

namespace posefront {
namespace {

using testing::random_matrix;
using testing::random_tensor;

ResidualBlock block_from(Tensor w1, Tensor b1, Tensor w2, Tensor b2, double threshold = 40.0) {
  ResidualBlock b;
  b.inner = AffineLayer(std::move(w1), std::move(b1));
  b.outer = AffineLayer(std::move(w2), std::move(b2));
  b.threshold_deg = threshold;
  return b;
}

ResidualBlock random_block(std::size_t d, Rng& rng) {
  return block_from(random_matrix(d, d, rng), random_tensor(d, rng), random_matrix(d, d, rng), random_tensor(d, rng));
}

double norm(const Tensor& t) { return std::sqrt(squared_norm(t.values())); }

TEST(Block, ZeroGammaIsBitwiseIdentity) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(12);
    const ResidualBlock b = random_block(d, rng);
    const Tensor v = random_tensor(d, rng, 10.0);
    ASSERT_EQ(block_forward(b, v, 0.0), v);
  }
}

TEST(Block, ZeroParamsGiveIdentity) {
  const Tensor v = Tensor::from({1.5, -2.0, 3.0});
  const ResidualBlock b = block_from(Tensor(3, 3), Tensor(3), Tensor(3, 3), Tensor(3));
  EXPECT_EQ(block_forward(b, v, 1.0), v);
}

TEST(Block, HandEvaluation) {
  const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  const ResidualBlock b = block_from(eye, Tensor(2), eye, Tensor(2));
  EXPECT_EQ(block_forward(b, Tensor::from({2, -2}), 0.5), Tensor::from({3, -2}));
}

TEST(Block, DimensionMismatchThrows) {
  Rng rng(2);
  const ResidualBlock b = random_block(4, rng);
  EXPECT_THROW(block_forward(b, Tensor(3), 1.0), DimensionError);
}

TEST(Block, ZeroGammaBackwardPassesUpstreamThrough) {
  Rng rng(3);
  ResidualBlock b = random_block(5, rng);
  BlockCache cache;
  block_forward(b, random_tensor(5, rng), 0.0, &cache);
  const Tensor up = random_tensor(5, rng);
  EXPECT_EQ(block_backward(b, cache, up), up);
  for (double g : b.inner.weight().grad.values()) EXPECT_EQ(g, 0.0);
  for (double g : b.outer.bias().grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Block, BackwardWithoutForwardIsStateError) {
  Rng rng(3);
  ResidualBlock b = random_block(2, rng);
  EXPECT_THROW(block_backward(b, BlockCache{}, Tensor(2)), StateError);
}

TEST(Module, BlocksFollowDescendingThresholds) {
  Rng rng(4);
  const ProgressiveModule m(8, GateConfig{}, rng);
  ASSERT_EQ(m.blocks().size(), 3u);
  EXPECT_EQ(m.blocks()[0].threshold_deg, 60.0);
  EXPECT_EQ(m.blocks()[1].threshold_deg, 40.0);
  EXPECT_EQ(m.blocks()[2].threshold_deg, 20.0);
}

TEST(Module, GammasFollowSoftGate) {
  Rng rng(4);
  ProgressiveModule m(8, GateConfig{}, rng);
  const auto g = m.gammas(-50.0);
  EXPECT_EQ(g[0], soft_gate(60.0, 50.0));
  EXPECT_EQ(g[2], soft_gate(20.0, 50.0));
  for (double v : m.gammas(90.0)) EXPECT_GT(v, 0.993);
  m.set_gate_mode(GateMode::kFixedOne);
  for (double v : m.gammas(0.0)) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(m.gammas(91.0), DomainError);
}

TEST(Module, FrontalAnglesBarelyMoveTheEmbedding) {
  Rng rng(5);
  const ProgressiveModule m(8, GateConfig{}, rng);
  const Tensor v = random_tensor(8, rng);
  const Tensor out = m.frontalize(v, 0.0);
  // Triangle inequality over the three gated residuals, each gate <= soft_gate(20, 0).
  double bound = 0.0;
  Tensor f = v;
  for (const auto& b : m.blocks()) {
    const Tensor r = block_forward(b, f, 1.0);
    Tensor residual = r;
    for (std::size_t k = 0; k < 8; ++k) residual[k] -= f[k];
    bound += soft_gate(b.threshold_deg, 0.0) * norm(residual);
    f = block_forward(b, f, soft_gate(b.threshold_deg, 0.0));
  }
  Tensor diff = out;
  for (std::size_t k = 0; k < 8; ++k) diff[k] -= v[k];
  EXPECT_LE(norm(diff), bound * (1.0 + 1e-9));
  EXPECT_LE(soft_gate(20.0, 0.0), 4.54e-5);
}

TEST(Module, SaturatedSingleBlockMatchesFullGate) {
  Rng rng(6);
  const ProgressiveModule m(8, gate_config_for_blocks(1), rng);
  const Tensor v = random_tensor(8, rng);
  const Tensor a = m.frontalize(v, 90.0);
  const Tensor b = block_forward(m.blocks()[0], v, 1.0);
  Tensor diff = a;
  for (std::size_t k = 0; k < 8; ++k) diff[k] -= b[k];
  EXPECT_LT(norm(diff), 1e-2 * norm(b));
}

TEST(Module, FrontalizeIsDeterministic) {
  Rng rng(7);
  const ProgressiveModule m(6, GateConfig{}, rng);
  const Tensor v = random_tensor(6, rng);
  EXPECT_EQ(m.frontalize(v, 37.0), m.frontalize(v, 37.0));
  EXPECT_EQ(m.frontalize(v, 37.0).size(), 6u);
}

TEST(Module, BackwardMatchesFiniteDifferencesOnSquaredNorm) {
  Rng rng(8);
  int checked = 0;
  while (checked < 100) {
    ProgressiveModule m(8, GateConfig{}, rng);
    const Tensor v = random_tensor(8, rng);
    const double yaw = rng.uniform(-90.0, 90.0);
    FrontalizeCache cache;
    const Tensor out = m.frontalize(v, yaw, &cache);
    if (ProgressiveModule::min_abs_pre_activation(cache) < 1e-4) continue;
    Tensor up = out;
    for (double& x : up.values()) x *= 2.0;
    const Tensor dx = m.frontalize_backward(cache, up);
    const auto f = [&](const Tensor& x) { return squared_norm(m.frontalize(x, yaw).values()); };
    ASSERT_LT(relative_error(dx.values(), finite_difference_grad(f, v, 1e-5).values()), 1e-6);
    ++checked;
  }
}

TEST(Module, BackwardIsLinearInUpstream) {
  Rng rng(9);
  ProgressiveModule m(5, GateConfig{}, rng);
  const Tensor v = random_tensor(5, rng);
  FrontalizeCache cache;
  m.frontalize(v, 70.0, &cache);
  const Tensor up = random_tensor(5, rng);
  Tensor up2 = up;
  for (double& x : up2.values()) x *= 2.0;
  m.frontalize_backward(cache, up);
  std::vector<Tensor> once;
  for (Param* p : m.params()) once.push_back(p->grad);
  for (Param* p : m.params()) p->zero_grad();
  m.frontalize_backward(cache, up2);
  std::size_t i = 0;
  for (Param* p : m.params()) {
    for (std::size_t k = 0; k < p->size(); ++k) ASSERT_EQ(p->grad[k], 2.0 * once[i][k]);
    ++i;
  }
}

TEST(Module, FixedGateTurnsEveryBlockOn) {
  Rng rng(10);
  ProgressiveModule soft(4, GateConfig{}, rng);
  ProgressiveModule fixed(4, GateConfig{}, soft.blocks(), GateMode::kFixedOne);
  const Tensor v = random_tensor(4, rng);
  Tensor expected = v;
  for (const auto& b : soft.blocks()) expected = block_forward(b, expected, 1.0);
  EXPECT_EQ(fixed.frontalize(v, 0.0), expected);
  EXPECT_EQ(fixed.parameter_count(), soft.parameter_count());
}

TEST(ParameterCount, PaperScale) {
  EXPECT_EQ(progressive_parameter_count(512, 1), 525312u);
  EXPECT_EQ(progressive_parameter_count(512, 3), 1575936u);
  EXPECT_EQ(progressive_parameter_count(512, 0), 0u);
  const double overhead = 1575936.0 / 21.3e6;
  EXPECT_NEAR(overhead, 0.0740, 5e-5);
  Rng rng(11);
  EXPECT_EQ(ProgressiveModule(16, GateConfig{}, rng).parameter_count(), progressive_parameter_count(16, 3));
}

}  // namespace
}  // namespace posefront
