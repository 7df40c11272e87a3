#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tin/tin_block.hpp"

using namespace tin;

namespace {

InterlaceConfig block_cfg(bool mirror = true, bool all = false) {
  InterlaceConfig cfg;
  cfg.frames = 8;
  cfg.channels = 16;
  cfg.groups = 4;
  cfg.mirror = mirror;
  cfg.weight_all_channels = all;
  return cfg;
}

}  // namespace

TEST(TinBlock, FreshBlockIsIdentity) {
  for (bool all : {false, true})
    for (auto input : {WeightNetInput::descriptor, WeightNetInput::pooled}) {
      Rng rng(1);
      const TinBlock block = TinBlock::create(block_cfg(true, all), rng, input);
      const Tensor u = rand_normal({8, 16, 4, 4}, rng, 3.0);
      auto [v, tape] = tin_forward(block, u);
      EXPECT_LE(max_abs_diff(v, u), 1e-10);
      EXPECT_EQ(v, u);
    }
}

TEST(TinBlock, InitialOffsetsZeroAndWeightsOne) {
  Rng rng(2);
  const TinBlock block = TinBlock::create(block_cfg(), rng);
  const auto [o, w] = tin_parameters(block, rand_normal({8, 16, 2, 2}, rng));
  for (double v : o.values.data()) EXPECT_EQ(v, 0.0);
  for (double v : w.values.data()) EXPECT_EQ(v, 1.0);
}

TEST(TinBlock, OffsetHeadReceivesGradientAtInit) {
  // Zero output layer must not block learning: fc2 and the WeightNet kernel
  // get non-zero gradients on the first step.
  Rng rng(3);
  const TinBlock block = TinBlock::create(block_cfg(), rng);
  const Tensor u = rand_normal({8, 16, 2, 2}, rng);
  const Tensor r = rand_normal({8, 16, 2, 2}, rng);
  auto [v, tape] = tin_forward(block, u);
  const TinGrads g = tin_backward(block, r, std::move(tape));
  double fc2 = 0, wn = 0;
  for (double x : g.offset_net.fc2_weight.data()) fc2 += std::abs(x);
  for (double x : g.weight_net.conv_weight.data()) wn += std::abs(x);
  EXPECT_GT(fc2, 0.0);
  EXPECT_GT(wn, 0.0);
}

TEST(TinBlock, DetachedBackwardMatchesInterlaceAdjoint) {
  Rng rng(4);
  TinBlock block = TinBlock::create(block_cfg(false), rng);
  block.offset_net.fc2_weight = rand_uniform(block.offset_net.fc2_weight.shape(), rng, -0.5, 0.5);
  const Tensor u = rand_normal({8, 16, 2, 2}, rng);
  const Tensor r = rand_normal({8, 16, 2, 2}, rng);
  auto [v, tape] = tin_forward(block, u);
  const OffsetVector o = tape.offsets;
  const WeightMatrix w = tape.weights;
  const TinGrads g = tin_backward(block, r, std::move(tape), true);
  const Tensor du = rand_normal({8, 16, 2, 2}, rng);
  Tensor jdu;
  interlace_apply(du, o, w, block.cfg, jdu);
  EXPECT_NEAR(oracle::dot(r, jdu), oracle::dot(g.input, du), 1e-11);
  for (double x : g.offset_net.fc2_weight.data()) EXPECT_EQ(x, 0.0);
}

TEST(TinBlock, DirectionalDerivativeOfInput) {
  Rng rng(5);
  TinBlock block = TinBlock::create(block_cfg(), rng);
  block.offset_net.fc2_weight = rand_uniform(block.offset_net.fc2_weight.shape(), rng, -0.5, 0.5);
  block.weight_net.conv_weight = rand_uniform(block.weight_net.conv_weight.shape(), rng, -0.2, 0.2);
  const Tensor u = rand_normal({8, 16, 2, 2}, rng);
  const Tensor r = rand_normal({8, 16, 2, 2}, rng);
  const Tensor du = rand_normal({8, 16, 2, 2}, rng);
  auto [v, tape] = tin_forward(block, u);
  const TinGrads g = tin_backward(block, r, std::move(tape));
  const double h = 1e-6;
  const Tensor vp = tin_forward(block, u + du * h).first;
  const Tensor vm = tin_forward(block, u - du * h).first;
  const double numeric = oracle::dot(vp - vm, r) / (2 * h);
  EXPECT_NEAR(numeric, oracle::dot(g.input, du), 1e-6 * std::max(1.0, std::abs(numeric)));
}

TEST(TinBlock, RejectsWrongClip) {
  Rng rng(6);
  const TinBlock block = TinBlock::create(block_cfg(), rng);
  EXPECT_THROW(tin_forward(block, Tensor({4, 16, 2, 2})), ShapeError);
  EXPECT_THROW(tin_forward(block, Tensor({8, 16, 2})), ShapeError);
}

TEST(TinBlock, ParameterNamesAndShapes) {
  Rng rng(7);
  TinBlock block = TinBlock::create(block_cfg(true, true), rng, WeightNetInput::pooled);
  std::vector<std::string> names;
  block.for_each_param([&](const std::string& n, Tensor&) { names.push_back(n); });
  ASSERT_EQ(names.size(), 8u);
  EXPECT_EQ(names.front(), "offset_net.conv_weight");
  EXPECT_EQ(names.back(), "weight_net.conv_bias");
  EXPECT_EQ(block.weight_net.conv_weight.shape(), (Shape{5, 1, 3}));
}

TEST(TinBlock, FrozenNetsReduceToTemporalSample) {
  InterlaceConfig cfg;
  cfg.frames = 8;
  cfg.channels = 4;
  cfg.groups = 1;
  cfg.shift_fraction = 1.0;
  cfg.mirror = false;
  Rng rng(6);
  TinBlock block = TinBlock::create(cfg, rng);
  // sigmoid(b) = 0.5 + 1.3 / 8 with the fc2 weights at zero.
  const double p = 0.5 + 1.3 / 8.0;
  block.offset_net.fc2_bias[0] = std::log(p / (1.0 - p));
  const Tensor u = rand_normal({8, 4, 3, 3}, rng);
  const auto [o, w] = tin_parameters(block, u);
  EXPECT_NEAR(o[0], 1.3, 1e-12);
  for (double x : w.values.data()) EXPECT_EQ(x, 1.0);
  auto [v, tape] = tin_forward(block, u);
  EXPECT_LE(max_abs_diff(v, temporal_sample(u, o[0])), 1e-12);
}

TEST(TinBlock, ZeroUpstreamGivesZeroGradients) {
  Rng rng(7);
  TinBlock block = TinBlock::create(block_cfg(), rng);
  block.offset_net.fc2_weight = rand_uniform(block.offset_net.fc2_weight.shape(), rng, -1, 1);
  block.weight_net.conv_weight = rand_uniform(block.weight_net.conv_weight.shape(), rng, -1, 1);
  const Tensor u = rand_normal({8, 16, 2, 2}, rng);
  auto [v, tape] = tin_forward(block, u);
  TinGrads g = tin_backward(block, Tensor(u.shape()), std::move(tape));
  for (double x : g.input.data()) EXPECT_EQ(x, 0.0);
  g.offset_net.for_each([](const char* name, const Tensor& t) {
    for (double x : t.data()) EXPECT_EQ(x, 0.0) << name;
  });
  g.weight_net.for_each([](const char* name, const Tensor& t) {
    for (double x : t.data()) EXPECT_EQ(x, 0.0) << name;
  });
}
