#pragma once

// Per-frame layers for the toy video networks. Activations are [T, C, H, W]
// until the spatial pooling, then [T, C], then [C], then logits [K].

#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "tin/nets.hpp"
#include "tin/tensor.hpp"

namespace tin {

struct Conv2dShape {
  std::size_t frames, in_channels, height, width;
  std::size_t out_channels, kernel, stride, pad;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

namespace detail {

inline Conv2dShape conv2d_shape(const Shape& x, const Shape& w, std::size_t stride) {
  if (x.size() != 4 || w.size() != 4 || w[1] != x[1] || w[2] != w[3] || w[2] % 2 == 0 || stride == 0)
    throw ShapeError("conv2d: incompatible shapes " + shape_string(x) + " / " + shape_string(w));
  return {x[0], x[1], x[2], x[3], w[0], w[2], stride, w[2] / 2};
}

// Output columns ox with 0 <= ox*stride + kx - pad < width.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k,
                                                       std::size_t stride, std::size_t pad) {
  std::size_t lo = 0;
  while (lo < out && static_cast<long>(lo * stride + k) < static_cast<long>(pad)) ++lo;
  std::size_t hi = lo;
  while (hi < out && hi * stride + k - pad < in) ++hi;
  return {lo, hi};
}

}  // namespace detail

namespace detail {

// cols[(c*k + ky)*k + kx, oy*wo + ox] = x[c, oy*stride + ky - pad, ox*stride + kx - pad] or 0
template <std::floating_point T>
void im2col(const T* in, const Conv2dShape& s, T* cols) {
  const std::size_t k = s.kernel, ho = s.out_height(), wo = s.out_width();
  for (std::size_t c = 0; c < s.in_channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky) {
      const auto [oy0, oy1] = valid_range(ho, s.height, ky, s.stride, s.pad);
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = cols + ((c * k + ky) * k + kx) * ho * wo;
        std::fill(dst, dst + ho * wo, T(0));
        const auto [ox0, ox1] = valid_range(wo, s.width, kx, s.stride, s.pad);
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const T* row = in + (c * s.height + oy * s.stride + ky - s.pad) * s.width;
          for (std::size_t ox = ox0; ox < ox1; ++ox) dst[oy * wo + ox] = row[ox * s.stride + kx - s.pad];
        }
      }
    }
}

template <std::floating_point T>
void col2im_add(const T* cols, const Conv2dShape& s, T* in) {
  const std::size_t k = s.kernel, ho = s.out_height(), wo = s.out_width();
  for (std::size_t c = 0; c < s.in_channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky) {
      const auto [oy0, oy1] = valid_range(ho, s.height, ky, s.stride, s.pad);
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = cols + ((c * k + ky) * k + kx) * ho * wo;
        const auto [ox0, ox1] = valid_range(wo, s.width, kx, s.stride, s.pad);
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          T* row = in + (c * s.height + oy * s.stride + ky - s.pad) * s.width;
          for (std::size_t ox = ox0; ox < ox1; ++ox) row[ox * s.stride + kx - s.pad] += src[oy * wo + ox];
        }
      }
    }
}

// c[m, n] += sum_k a[m, k] * b[k, n], all row-major with the given leading
// dimensions. 4x8 register tiles.
template <std::floating_point T>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
              std::size_t ldb, T* c, std::size_t ldc) {
  constexpr std::size_t MR = 4, NR = 8;
  std::size_t i = 0;
  for (; i + MR <= m; i += MR) {
    std::size_t j = 0;
    for (; j + NR <= n; j += NR) {
      // Two vectors of NR/2 lanes per row; the vector extension keeps the
      // tile in registers where plain arrays are spilled.
      using V [[gnu::vector_size(NR / 2 * sizeof(T))]] = T;
      V acc[MR][2] = {};
      for (std::size_t p = 0; p < k; ++p) {
        V b0, b1;
        std::memcpy(&b0, b + p * ldb + j, sizeof(V));
        std::memcpy(&b1, b + p * ldb + j + NR / 2, sizeof(V));
        for (std::size_t r = 0; r < MR; ++r) {
          const T av = a[(i + r) * lda + p];
          acc[r][0] += av * b0;
          acc[r][1] += av * b1;
        }
      }
      for (std::size_t r = 0; r < MR; ++r)
        for (std::size_t q = 0; q < NR; ++q) c[(i + r) * ldc + j + q] += acc[r][q / (NR / 2)][q % (NR / 2)];
    }
    for (; j < n; ++j)
      for (std::size_t r = 0; r < MR; ++r) {
        T acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += a[(i + r) * lda + p] * b[p * ldb + j];
        c[(i + r) * ldc + j] += acc;
      }
  }
  for (; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += av * b[p * ldb + j];
    }
}

template <std::floating_point T>
std::vector<T> transposed(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  return out;
}

}  // namespace detail

/// Same-padded 2D convolution applied to every frame independently.
template <std::floating_point T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias, std::size_t stride) {
  const auto s = detail::conv2d_shape(x.shape(), weight.shape(), stride);
  if (bias.shape() != Shape{s.out_channels}) throw ShapeError("conv2d: bias shape mismatch");
  const std::size_t ho = s.out_height(), wo = s.out_width(), pix = ho * wo;
  const std::size_t depth = s.in_channels * s.kernel * s.kernel;
  BasicTensor<T> y({s.frames, s.out_channels, ho, wo});
  std::vector<T> cols(depth * pix);
  for (std::size_t t = 0; t < s.frames; ++t) {
    detail::im2col(x.ptr() + t * s.in_channels * s.height * s.width, s, cols.data());
    T* out = y.ptr() + t * s.out_channels * pix;
    for (std::size_t o = 0; o < s.out_channels; ++o) std::fill(out + o * pix, out + (o + 1) * pix, bias[o]);
    detail::gemm_acc(s.out_channels, pix, depth, weight.ptr(), depth, cols.data(), pix, out, pix);
  }
  return y;
}

template <std::floating_point T>
struct Conv2dGrads {
  BasicTensor<T> input, weight, bias;
};

template <std::floating_point T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_y, std::size_t stride, bool need_input = true) {
  const auto s = detail::conv2d_shape(x.shape(), weight.shape(), stride);
  const std::size_t ho = s.out_height(), wo = s.out_width(), pix = ho * wo;
  const std::size_t depth = s.in_channels * s.kernel * s.kernel;
  if (grad_y.shape() != Shape{s.frames, s.out_channels, ho, wo}) throw ShapeError("conv2d_backward: grad shape");
  Conv2dGrads<T> g{need_input ? BasicTensor<T>(x.shape()) : BasicTensor<T>(), BasicTensor<T>(weight.shape()),
                   BasicTensor<T>({s.out_channels})};
  std::vector<T> cols(depth * pix);
  std::vector<T> gcols(need_input ? depth * pix : 0);
  const std::vector<T> wt = need_input ? detail::transposed(weight.ptr(), s.out_channels, depth) : std::vector<T>();
  for (std::size_t t = 0; t < s.frames; ++t) {
    const T* gy = grad_y.ptr() + t * s.out_channels * pix;
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      T bsum = 0;
      for (std::size_t p = 0; p < pix; ++p) bsum += gy[o * pix + p];
      g.bias[o] += bsum;
    }
    detail::im2col(x.ptr() + t * s.in_channels * s.height * s.width, s, cols.data());
    const std::vector<T> cols_t = detail::transposed(cols.data(), depth, pix);
    detail::gemm_acc(s.out_channels, depth, pix, gy, pix, cols_t.data(), depth, g.weight.ptr(), depth);
    if (need_input) {
      std::fill(gcols.begin(), gcols.end(), T(0));
      detail::gemm_acc(depth, pix, s.out_channels, wt.data(), s.out_channels, gy, pix, gcols.data(), pix);
      detail::col2im_add(gcols.data(), s, g.input.ptr() + t * s.in_channels * s.height * s.width);
    }
  }
  return g;
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = relu(v);
  return y;
}

/// Zeroes the gradient wherever the forward input was not positive.
inline Tensor relu_backward(const Tensor& x, const Tensor& grad_y) {
  grad_y.require_same_shape(x, "relu_backward");
  Tensor g = grad_y;
  for (std::size_t i = 0; i < g.numel(); ++i)
    if (!(x[i] > 0.0)) g[i] = 0.0;
  return g;
}

/// [T, C, H, W] -> [T, C]
inline Tensor spatial_mean(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("spatial_mean: expected [T,C,H,W]");
  const std::size_t plane = x.extent(2) * x.extent(3);
  if (plane == 0) throw ShapeError("spatial_mean: empty plane");
  Tensor y({x.extent(0), x.extent(1)});
  for (std::size_t i = 0; i < y.numel(); ++i) {
    long double s = 0;
    for (std::size_t p = 0; p < plane; ++p) s += x[i * plane + p];
    y[i] = static_cast<double>(s / plane);
  }
  return y;
}

inline Tensor spatial_mean_backward(const Tensor& grad_y, const Shape& input_shape) {
  const std::size_t plane = input_shape[2] * input_shape[3];
  Tensor g(input_shape);
  for (std::size_t i = 0; i < grad_y.numel(); ++i)
    std::fill(g.ptr() + i * plane, g.ptr() + (i + 1) * plane, grad_y[i] / static_cast<double>(plane));
  return g;
}

/// [T, C] -> [C]
inline Tensor temporal_mean(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("temporal_mean: expected [T,C]");
  return mean_over(x, {0});
}

inline Tensor temporal_mean_backward(const Tensor& grad_y, const Shape& input_shape) {
  Tensor g(input_shape);
  const std::size_t frames = input_shape[0], channels = input_shape[1];
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < channels; ++c) g[t * channels + c] = grad_y[c] / static_cast<double>(frames);
  return g;
}

/// Depthwise 3-tap temporal convolution, kernel [C, 3] over relative frames
/// -1, 0, +1 with zero padding: y[t, c] = sum_j k[c, j] * x[t + j - 1, c].
template <std::floating_point T>
void temporal_conv3_apply(const BasicTensor<T>& x, const BasicTensor<T>& kernel, BasicTensor<T>& y) {
  if (x.rank() != 4 || kernel.shape() != Shape{x.extent(1), 3}) throw ShapeError("temporal_conv3: shape mismatch");
  if (y.shape() != x.shape()) y = BasicTensor<T>(x.shape());
  const std::size_t frames = x.extent(0), channels = x.extent(1), plane = x.extent(2) * x.extent(3);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < channels; ++c) {
      T* dst = y.ptr() + (t * channels + c) * plane;
      const T* mid = x.ptr() + (t * channels + c) * plane;
      const T k0 = kernel[c * 3], k1 = kernel[c * 3 + 1], k2 = kernel[c * 3 + 2];
      const T* prev = t > 0 ? mid - channels * plane : nullptr;
      const T* next = t + 1 < frames ? mid + channels * plane : nullptr;
      if (prev && next) {
        for (std::size_t i = 0; i < plane; ++i) dst[i] = k0 * prev[i] + k1 * mid[i] + k2 * next[i];
      } else if (next) {
        for (std::size_t i = 0; i < plane; ++i) dst[i] = k1 * mid[i] + k2 * next[i];
      } else if (prev) {
        for (std::size_t i = 0; i < plane; ++i) dst[i] = k0 * prev[i] + k1 * mid[i];
      } else {
        for (std::size_t i = 0; i < plane; ++i) dst[i] = k1 * mid[i];
      }
    }
}

template <std::floating_point T>
BasicTensor<T> temporal_conv3_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernel) {
  BasicTensor<T> y(x.shape());
  temporal_conv3_apply(x, kernel, y);
  return y;
}

struct TemporalConvGrads {
  Tensor input, kernel;
};

inline TemporalConvGrads temporal_conv3_backward(const Tensor& x, const Tensor& kernel, const Tensor& grad_y) {
  grad_y.require_same_shape(x, "temporal_conv3_backward");
  const std::size_t frames = x.extent(0), channels = x.extent(1), plane = x.extent(2) * x.extent(3);
  TemporalConvGrads g{Tensor(x.shape()), Tensor(kernel.shape())};
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < channels; ++c) {
      const double* gy = grad_y.ptr() + (t * channels + c) * plane;
      for (long j = 0; j < 3; ++j) {
        const long src = static_cast<long>(t) + j - 1;
        if (src < 0 || src >= static_cast<long>(frames)) continue;
        const std::size_t off = (static_cast<std::size_t>(src) * channels + c) * plane;
        const double kv = kernel[c * 3 + static_cast<std::size_t>(j)];
        double acc = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          acc += gy[i] * x[off + i];
          g.input[off + i] += kv * gy[i];
        }
        g.kernel[c * 3 + static_cast<std::size_t>(j)] += acc;
      }
    }
  return g;
}

struct CrossEntropy {
  double loss = 0.0;
  Tensor grad_logits;
  std::size_t predicted = 0;
};

inline CrossEntropy softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1 || label >= logits.numel()) throw ShapeError("softmax_cross_entropy: bad label or logits");
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  double denom = 0.0;
  for (double v : logits.data()) denom += std::exp(v - mx);
  CrossEntropy ce;
  ce.grad_logits = Tensor(logits.shape());
  for (std::size_t k = 0; k < logits.numel(); ++k) {
    ce.grad_logits[k] = std::exp(logits[k] - mx) / denom;
    if (logits[k] > logits[ce.predicted]) ce.predicted = k;
  }
  ce.loss = -(logits[label] - mx - std::log(denom));
  ce.grad_logits[label] -= 1.0;
  if (!std::isfinite(ce.loss)) throw NonFiniteError("cross-entropy loss is not finite");
  return ce;
}

}  // namespace tin
