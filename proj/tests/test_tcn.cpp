#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tin/layers.hpp"
#include "tin/tcn.hpp"

using namespace tin;

namespace {

InterlaceConfig cfg_of(std::size_t frames, std::size_t channels, std::size_t groups, bool mirror, bool all = false) {
  InterlaceConfig cfg;
  cfg.frames = frames;
  cfg.channels = channels;
  cfg.groups = groups;
  cfg.mirror = mirror;
  cfg.weight_all_channels = all;
  return cfg;
}

/// Direct evaluation of a per-channel, per-frame kernel over [-T, T].
Tensor apply_dense(const Tensor& u, const DenseTemporalKernel& k) {
  const std::size_t T = u.extent(0), C = u.extent(1), P = u.extent(2) * u.extent(3);
  Tensor v(u.shape());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (long s = -static_cast<long>(T); s <= static_cast<long>(T); ++s) {
        const long src = static_cast<long>(t) + s;
        if (src < 0 || src >= static_cast<long>(T)) continue;
        const double tap = k.taps(c, t, static_cast<std::size_t>(s + static_cast<long>(T)));
        for (std::size_t p = 0; p < P; ++p)
          v[(t * C + c) * P + p] += tap * u[(static_cast<std::size_t>(src) * C + c) * P + p];
      }
  return v;
}

}  // namespace

TEST(EquivKernel, FractionalOffsetGivesTwoAdjacentTaps) {
  const InterlaceConfig cfg = cfg_of(4, 8, 2, true);
  const OffsetVector o{Tensor({2}, {1.3, -1.3})};
  const WeightMatrix w{Tensor({2, 4}, {1, 1, 1, 1, 0.5, 0.5, 0.5, 0.5})};
  const EquivKernel k = build_equiv_kernel(o, w, cfg);
  const auto& taps = k.taps(0, 0);
  ASSERT_EQ(taps.size(), 2u);
  EXPECT_EQ(taps[0].position, 1);
  EXPECT_NEAR(taps[0].value, 0.7, 1e-15);
  EXPECT_EQ(taps[1].position, 2);
  EXPECT_NEAR(taps[1].value, 0.3, 1e-15);
  const auto& back = k.taps(1, 2);
  EXPECT_EQ(back[0].position, -2);
  EXPECT_NEAR(back[0].value, 0.5 * 0.3, 1e-15);
  EXPECT_EQ(back[1].position, -1);
  EXPECT_NEAR(back[1].value, 0.5 * 0.7, 1e-15);
}

TEST(EquivKernel, IntegerOffsetCollapsesToOneTap) {
  const InterlaceConfig cfg = cfg_of(8, 16, 4, false);
  const OffsetVector o{Tensor({4}, {2.0, -3.0, 0.0, 1.0})};
  const EquivKernel k = build_equiv_kernel(o, WeightMatrix::ones(4, 8), cfg);
  EXPECT_EQ(k.taps(0, 5)[0], (KernelTap{2, 1.0}));
  EXPECT_EQ(k.taps(0, 5)[1].value, 0.0);
  EXPECT_EQ(k.taps(1, 0)[0], (KernelTap{-3, 1.0}));
}

TEST(EquivKernel, TapsSumToAttentionWeight) {
  Rng rng(1);
  const InterlaceConfig cfg = cfg_of(8, 16, 4, false);
  const OffsetVector o{rand_uniform({4}, rng, -3.9, 3.9)};
  const WeightMatrix w{rand_uniform({4, 8}, rng, 0.1, 1.9)};
  const EquivKernel k = build_equiv_kernel(o, w, cfg);
  for (std::size_t g = 0; g < 4; ++g)
    for (std::size_t t = 0; t < 8; ++t) {
      const auto& taps = k.taps(g, t);
      EXPECT_EQ(taps[1].position, taps[0].position + 1);
      EXPECT_NEAR(taps[0].value + taps[1].value, w(g, t), 1e-15);
    }
}

TEST(EquivKernel, UnshiftedRowIsUnitOrAttention) {
  const OffsetVector o = OffsetVector::zeros(2);
  const WeightMatrix w{Tensor({3, 2}, {1, 1, 1, 1, 0.25, 1.75})};
  const EquivKernel plain = build_equiv_kernel(o, WeightMatrix::ones(2, 2), cfg_of(2, 8, 2, true));
  EXPECT_EQ(plain.taps(2, 1), (std::vector<KernelTap>{{0, 1.0}}));
  const EquivKernel all = build_equiv_kernel(o, w, cfg_of(2, 8, 2, true, true));
  EXPECT_EQ(all.taps(2, 1), (std::vector<KernelTap>{{0, 1.75}}));
}

TEST(DenseTconv, MatchesDirectKernelEvaluation) {
  Rng rng(2);
  const InterlaceConfig cfg = cfg_of(8, 16, 4, true, true);
  const Tensor learned = rand_uniform({2}, rng, -3.9, 3.9);
  const OffsetVector o{Tensor({4}, {learned[0], learned[1], -learned[0], -learned[1]})};
  const WeightMatrix w{rand_uniform({5, 8}, rng, 0.1, 1.9)};
  const DenseTemporalKernel k = to_dense(build_equiv_kernel(o, w, cfg), cfg);
  const Tensor u = rand_uniform({8, 16, 2, 2}, rng, -1, 1);
  EXPECT_LT(max_abs_diff(dense_tconv(u, k), apply_dense(u, k)), 1e-15);
}

TEST(DenseTconv, TimeInvariantKernelMatchesDepthwiseConv) {
  Rng rng(3);
  const Tensor taps = rand_uniform({6, 3}, rng, -1, 1);
  const Tensor u = rand_uniform({5, 6, 2, 3}, rng, -1, 1);
  const auto k = DenseTemporalKernel::from_centered(taps, 5);
  EXPECT_LT(max_abs_diff(dense_tconv(u, k), temporal_conv3_forward(u, taps)), 1e-15);
  EXPECT_THROW(DenseTemporalKernel::from_centered(Tensor({6, 2}), 5), ShapeError);
}

TEST(DenseTconv, KernelTapBoundsChecked) {
  auto k = DenseTemporalKernel::zeros(2, 4);
  EXPECT_NO_THROW(k.at(0, 0, 4));
  EXPECT_THROW(k.at(0, 0, 5), ShapeError);
}

TEST(Equivalence, InterlaceEqualsHatOracleAndConvolution) {
  Rng rng(4);
  const InterlaceConfig cfg = cfg_of(16, 32, 4, false);
  const std::vector<double> off{7.999, -7.5, 3.0, 0.0001};
  const OffsetVector o{Tensor({4}, std::vector<double>(off))};
  const Tensor wt = rand_uniform({4, 16}, rng, 0.1, 1.9);
  const Tensor u = rand_uniform({16, 32, 1, 2}, rng, -1, 1);
  const EquivReport rep = verify_equivalence(u, o, WeightMatrix{wt}, cfg, 1e-12);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.group_max_diff.size(), 4u);
  const Tensor conv = dense_tconv(u, to_dense(build_equiv_kernel(o, WeightMatrix{wt}, cfg), cfg));
  EXPECT_LT(max_abs_diff(conv, oracle::interlace(u, off, wt, cfg)), 1e-14);
}

TEST(EquivalenceSweep, CoversFramesAndOffsetKinds) {
  const EquivSweepReport rep = run_equivalence_sweep(90, 7, 1e-9);
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.trials, 90u);
  EXPECT_EQ(rep.max_diff_by_frames.size(), 3u);
  EXPECT_EQ(rep.max_diff_by_kind.size(), 3u);
  EXPECT_EQ(rep.group_max_diff.size(), 4u);
  EXPECT_LT(rep.max_abs_diff, 1e-12);
  // Integer offsets reduce to pure shifts: every product is exact.
  EXPECT_EQ(rep.integer_max_diff, 0.0);
}

TEST(EquivalenceSweep, DeterministicUnderSeed) {
  const auto a = run_equivalence_sweep(30, 3, 1e-9);
  const auto b = run_equivalence_sweep(30, 3, 1e-9);
  EXPECT_EQ(a.max_abs_diff, b.max_abs_diff);
  EXPECT_EQ(a.group_max_diff, b.group_max_diff);
}

TEST(EquivalenceTrial, FrameCountsCycleAndEveryTrialPasses) {
  const std::size_t expected[] = {4, 8, 16};
  Rng root(11);
  for (std::size_t i = 0; i < 60; ++i) {
    OffsetKind kind{};
    std::size_t frames = 0;
    Rng rng = root.split(i);
    const auto rep = equivalence_trial(i, rng, 1e-9, kind, frames);
    EXPECT_TRUE(rep.passed);
    EXPECT_EQ(frames, expected[i % 3]);
  }
}

TEST(DenseTconv, IdentityKernelLeavesInputUnchanged) {
  Rng rng(21);
  const Tensor u = rand_normal({6, 3, 2, 2}, rng);
  Tensor centred({3, 3});
  for (std::size_t c = 0; c < 3; ++c) centred(c, 1) = 1.0;
  EXPECT_EQ(dense_tconv(u, DenseTemporalKernel::from_centered(centred, 6)), u);
}

TEST(DenseTconv, UnitTapAtMinusOneShiftsWithZeroFill) {
  Rng rng(22);
  const Tensor u = rand_normal({6, 3, 2, 2}, rng);
  Tensor centred({3, 3});
  for (std::size_t c = 0; c < 3; ++c) centred(c, 0) = 1.0;
  const Tensor v = dense_tconv(u, DenseTemporalKernel::from_centered(centred, 6));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) {
        EXPECT_EQ(v(0, c, y, x), 0.0);
        for (std::size_t t = 1; t < 6; ++t) EXPECT_EQ(v(t, c, y, x), u(t - 1, c, y, x));
      }
}
