#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tin/layers.hpp"

using namespace tin;

namespace {

/// Direct same-padded convolution, one output element at a time.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
  const std::size_t T = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t Cout = w.extent(0), k = w.extent(2);
  const long pad = static_cast<long>(k / 2);
  const std::size_t Ho = (H + 2 * (k / 2) - k) / stride + 1, Wo = (W + 2 * (k / 2) - k) / stride + 1;
  Tensor y({T, Cout, Ho, Wo});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t o = 0; o < Cout; ++o)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double s = b[o];
          for (std::size_t c = 0; c < Cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - pad;
                const long ix = static_cast<long>(ox * stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                s += w(o, c, ky, kx) * x(t, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          y(t, o, oy, ox) = s;
        }
  return y;
}

}  // namespace

TEST(Gemm, MatchesTripleLoopIncludingRemainders) {
  Rng rng(1);
  for (auto [m, n, k] : {std::tuple<std::size_t, std::size_t, std::size_t>{4, 8, 3}, {7, 13, 5}, {1, 1, 1}, {9, 17, 33}}) {
    const Tensor a = rand_uniform({m, k}, rng, -1, 1);
    const Tensor b = rand_uniform({k, n}, rng, -1, 1);
    Tensor c = Tensor::full({m, n}, 0.5);
    detail::gemm_acc(m, n, k, a.ptr(), k, b.ptr(), n, c.ptr(), n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.5;
        for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(p, j);
        EXPECT_NEAR(c(i, j), s, 1e-13);
      }
  }
}

TEST(Conv2d, MatchesNaiveLoopAtBothStrides) {
  Rng rng(2);
  for (std::size_t stride : {1u, 2u}) {
    const Tensor x = rand_uniform({2, 3, 7, 6}, rng, -1, 1);
    const Tensor w = rand_uniform({5, 3, 3, 3}, rng, -1, 1);
    const Tensor b = rand_uniform({5}, rng, -1, 1);
    const Tensor y = conv2d_forward(x, w, b, stride);
    const Tensor want = naive_conv(x, w, b, stride);
    ASSERT_EQ(y.shape(), want.shape());
    EXPECT_LT(max_abs_diff(y, want), 1e-13);
  }
}

TEST(Conv2d, StrideTwoHalvesSixteen) {
  const Tensor y = conv2d_forward(Tensor({1, 1, 16, 16}), Tensor({4, 1, 3, 3}), Tensor({4}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 8, 8}));
}

TEST(Conv2d, BackwardIsAdjoint) {
  Rng rng(3);
  for (std::size_t stride : {1u, 2u}) {
    const Tensor x = rand_uniform({2, 3, 6, 5}, rng, -1, 1);
    const Tensor w = rand_uniform({4, 3, 3, 3}, rng, -1, 1);
    const Tensor zero_b({4});
    const Tensor y = conv2d_forward(x, w, zero_b, stride);
    const Tensor r = rand_uniform(y.shape(), rng, -1, 1);
    const auto g = conv2d_backward(x, w, r, stride);
    const Tensor dx = rand_uniform(x.shape(), rng, -1, 1);
    const Tensor dw = rand_uniform(w.shape(), rng, -1, 1);
    EXPECT_NEAR(oracle::dot(conv2d_forward(dx, w, zero_b, stride), r), oracle::dot(g.input, dx), 1e-12);
    EXPECT_NEAR(oracle::dot(conv2d_forward(x, dw, zero_b, stride), r), oracle::dot(g.weight, dw), 1e-12);
    double bsum = 0;
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t i = 0; i < y.extent(2) * y.extent(3); ++i) bsum += r[(t * 4 + 1) * y.extent(2) * y.extent(3) + i];
    EXPECT_NEAR(g.bias[1], bsum, 1e-12);
  }
}

TEST(Conv2d, SkippingInputGradientLeavesItEmpty) {
  Rng rng(4);
  const Tensor x = rand_uniform({1, 2, 4, 4}, rng, -1, 1);
  const Tensor w = rand_uniform({2, 2, 3, 3}, rng, -1, 1);
  const auto full = conv2d_backward(x, w, Tensor::full({1, 2, 4, 4}, 1.0), 1, true);
  const auto part = conv2d_backward(x, w, Tensor::full({1, 2, 4, 4}, 1.0), 1, false);
  EXPECT_EQ(full.weight, part.weight);
  for (double v : part.input.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, RejectsEvenKernelOrChannelMismatch) {
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({2, 2, 2, 2}), Tensor({2}), 1), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({2, 3, 3, 3}), Tensor({2}), 1), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({2, 2, 3, 3}), Tensor({3}), 1), ShapeError);
}

TEST(Conv2d, FloatMatchesDouble) {
  Rng rng(5);
  const Tensor x = rand_uniform({2, 3, 5, 5}, rng, -1, 1);
  const Tensor w = rand_uniform({4, 3, 3, 3}, rng, -1, 1);
  const Tensor b = rand_uniform({4}, rng, -1, 1);
  const TensorF yf = conv2d_forward(x.cast<float>(), w.cast<float>(), b.cast<float>(), 1);
  EXPECT_LT(max_abs_diff(yf.cast<double>(), conv2d_forward(x, w, b, 1)), 1e-5);
}

TEST(Relu, ForwardAndMask) {
  const Tensor x({4}, {-1.0, 0.0, 2.0, -0.0});
  EXPECT_EQ(relu_forward(x), Tensor({4}, {0, 0, 2, 0}));
  EXPECT_EQ(relu_backward(x, Tensor::full({4}, 3.0)), Tensor({4}, {0, 0, 3, 0}));
}

TEST(Means, SpatialAndTemporal) {
  Rng rng(6);
  const Tensor x = rand_uniform({3, 2, 2, 2}, rng, -1, 1);
  const Tensor s = spatial_mean(x);
  ASSERT_EQ(s.shape(), (Shape{3, 2}));
  EXPECT_NEAR(s(2, 1), (x(2, 1, 0, 0) + x(2, 1, 0, 1) + x(2, 1, 1, 0) + x(2, 1, 1, 1)) / 4, 1e-15);
  const Tensor m = temporal_mean(s);
  EXPECT_NEAR(m[0], (s(0, 0) + s(1, 0) + s(2, 0)) / 3, 1e-15);
  const Tensor r = rand_uniform({3, 2}, rng, -1, 1);
  EXPECT_NEAR(oracle::dot(s, r), oracle::dot(x, spatial_mean_backward(r, x.shape())), 1e-14);
  const Tensor q = rand_uniform({2}, rng, -1, 1);
  EXPECT_NEAR(oracle::dot(m, q), oracle::dot(s, temporal_mean_backward(q, s.shape())), 1e-14);
}

TEST(TemporalConv, IdentityKernelAndShift) {
  Rng rng(7);
  const Tensor x = rand_uniform({4, 2, 1, 2}, rng, -1, 1);
  EXPECT_EQ(temporal_conv3_forward(x, Tensor({2, 3}, {0, 1, 0, 0, 1, 0})), x);
  const Tensor y = temporal_conv3_forward(x, Tensor({2, 3}, {0, 0, 1, 0, 0, 1}));
  EXPECT_EQ(y(0, 1, 0, 1), x(1, 1, 0, 1));
  EXPECT_EQ(y(3, 0, 0, 0), 0.0);
}

TEST(TemporalConv, BackwardIsAdjoint) {
  Rng rng(8);
  const Tensor x = rand_uniform({5, 3, 2, 2}, rng, -1, 1);
  const Tensor k = rand_uniform({3, 3}, rng, -1, 1);
  const Tensor r = rand_uniform(x.shape(), rng, -1, 1);
  const auto g = temporal_conv3_backward(x, k, r);
  const Tensor dx = rand_uniform(x.shape(), rng, -1, 1);
  const Tensor dk = rand_uniform(k.shape(), rng, -1, 1);
  EXPECT_NEAR(oracle::dot(temporal_conv3_forward(dx, k), r), oracle::dot(g.input, dx), 1e-13);
  EXPECT_NEAR(oracle::dot(temporal_conv3_forward(x, dk), r), oracle::dot(g.kernel, dk), 1e-13);
}

TEST(CrossEntropy, ValueGradientAndPrediction) {
  const Tensor logits({3}, {1.0, 2.0, 0.5});
  const CrossEntropy ce = softmax_cross_entropy(logits, 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  EXPECT_NEAR(ce.loss, -std::log(std::exp(1.0) / z), 1e-14);
  EXPECT_EQ(ce.predicted, 1u);
  EXPECT_NEAR(ce.grad_logits[0], std::exp(1.0) / z - 1.0, 1e-15);
  EXPECT_NEAR(ce.grad_logits.sum(), 0.0, 1e-15);
  EXPECT_THROW(softmax_cross_entropy(logits, 3), ShapeError);
}

TEST(CrossEntropy, StableForLargeLogits) {
  const CrossEntropy ce = softmax_cross_entropy(Tensor({2}, {1000.0, 0.0}), 1);
  EXPECT_NEAR(ce.loss, 1000.0, 1e-9);
}
