#pragma once

// OffsetNet and WeightNet: small generators that map the spatially pooled
// [C, T] descriptor of a clip to per-group offsets and per-frame attention.
//
//   OffsetNet:  z --conv1d(C->1, k=3)--> s --fc1--> ReLU --fc2--> sigmoid --> raw in (0,1)^G
//               offset = (raw - 0.5) * T
//   WeightNet:  z --conv1d(C->rows, k=3)--> sigmoid * 2 --> E in (0,2)^(rows x T)
//
// Convolutions are cross-correlations over T with zero "same" padding.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tin/interlace.hpp"
#include "tin/tensor.hpp"

namespace tin {

/// Which signal WeightNet reads: the full [C, T] descriptor, or the [1, T]
/// output of OffsetNet's channel-aggregating convolution.
enum class WeightNetInput { descriptor, pooled };

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

/// Saturated values are clamped to the open interval (0, 1) so rescaled
/// offsets and attention never reach the ends of their ranges. The lower
/// bound must survive `lo - 0.5`, so it cannot be smaller than half an ulp of 1.
inline Tensor sigmoid_forward(const Tensor& x) {
  constexpr double lo = std::numeric_limits<double>::epsilon() / 2;
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  Tensor y = x;
  for (double& v : y.data()) v = std::clamp(sigmoid(v), lo, hi);
  return y;
}

/// Backward of sigmoid given its forward output y.
inline Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_y) {
  grad_y.require_same_shape(y, "sigmoid_backward");
  Tensor g(y.shape());
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] = grad_y[i] * y[i] * (1.0 - y[i]);
  return g;
}

/// Pools [T, C, H, W] to the [C, T] descriptor z[c, t] = mean over H, W.
inline Tensor pool_descriptor(const Tensor& u) {
  if (u.rank() != 4) throw ShapeError("pool_descriptor: expected [T,C,H,W]");
  const std::size_t frames = u.extent(0), channels = u.extent(1);
  const std::size_t plane = u.extent(2) * u.extent(3);
  if (plane == 0) throw ShapeError("pool_descriptor: zero spatial extent");
  Tensor z({channels, frames});
  const double* in = u.ptr();
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < channels; ++c) {
      const double* p = in + (t * channels + c) * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      z[c * frames + t] = acc / static_cast<double>(plane);
    }
  return z;
}

/// Broadcasts a descriptor gradient [C, T] back over the spatial plane.
inline Tensor pool_descriptor_backward(const Tensor& grad_z, const Shape& input_shape) {
  const std::size_t frames = input_shape[0], channels = input_shape[1];
  const std::size_t plane = input_shape[2] * input_shape[3];
  if (grad_z.shape() != Shape{channels, frames}) throw ShapeError("pool_descriptor_backward: shape mismatch");
  Tensor g(input_shape);
  double* out = g.ptr();
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = grad_z[c * frames + t] / static_cast<double>(plane);
      std::fill(out + (t * channels + c) * plane, out + (t * channels + c + 1) * plane, v);
    }
  return g;
}

// conv1d over T: x [Cin, T], weight [Cout, Cin, K], bias [Cout] -> [Cout, T]

inline Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 3 || weight.extent(1) != x.extent(0) ||
      bias.shape() != Shape{weight.extent(0)} || weight.extent(2) % 2 == 0)
    throw ShapeError("conv1d_same: incompatible shapes " + shape_string(x.shape()) + " / " +
                     shape_string(weight.shape()));
  const std::size_t cin = x.extent(0), frames = x.extent(1);
  const std::size_t cout = weight.extent(0), k = weight.extent(2);
  const long half = static_cast<long>(k / 2);
  Tensor y({cout, frames});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < frames; ++t) {
      double acc = bias[o];
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(t) + static_cast<long>(j) - half;
          if (src < 0 || src >= static_cast<long>(frames)) continue;
          acc += weight[(o * cin + c) * k + j] * x[c * frames + static_cast<std::size_t>(src)];
        }
      y[o * frames + t] = acc;
    }
  return y;
}

struct Conv1dGrads {
  Tensor input, weight, bias;
};

inline Conv1dGrads conv1d_same_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_y) {
  const std::size_t cin = x.extent(0), frames = x.extent(1);
  const std::size_t cout = weight.extent(0), k = weight.extent(2);
  if (grad_y.shape() != Shape{cout, frames}) throw ShapeError("conv1d_same_backward: grad shape mismatch");
  const long half = static_cast<long>(k / 2);
  Conv1dGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor({cout})};
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < frames; ++t) {
      const double gy = grad_y[o * frames + t];
      g.bias[o] += gy;
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(t) + static_cast<long>(j) - half;
          if (src < 0 || src >= static_cast<long>(frames)) continue;
          const std::size_t xi = c * frames + static_cast<std::size_t>(src);
          g.weight[(o * cin + c) * k + j] += gy * x[xi];
          g.input[xi] += gy * weight[(o * cin + c) * k + j];
        }
    }
  return g;
}

// Fully connected: x [In], weight [Out, In], bias [Out] -> [Out]

inline Tensor fc_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || weight.extent(1) != x.numel() || bias.shape() != Shape{weight.extent(0)})
    throw ShapeError("fc_forward: incompatible shapes");
  const std::size_t out = weight.extent(0), in = weight.extent(1);
  Tensor y({out});
  for (std::size_t o = 0; o < out; ++o) {
    double acc = bias[o];
    for (std::size_t i = 0; i < in; ++i) acc += weight[o * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

struct FcGrads {
  Tensor input, weight, bias;
};

inline FcGrads fc_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_y) {
  const std::size_t out = weight.extent(0), in = weight.extent(1);
  if (grad_y.numel() != out) throw ShapeError("fc_backward: grad shape mismatch");
  FcGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor({out})};
  for (std::size_t o = 0; o < out; ++o) {
    g.bias[o] = grad_y[o];
    for (std::size_t i = 0; i < in; ++i) {
      g.weight[o * in + i] = grad_y[o] * x[i];
      g.input[i] += grad_y[o] * weight[o * in + i];
    }
  }
  return g;
}

inline Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rand_uniform(std::move(shape), rng, -k, k);
}

struct OffsetNetParams {
  Tensor conv_weight;  ///< [1, C, 3]
  Tensor conv_bias;    ///< [1]
  Tensor fc1_weight;   ///< [T, T]
  Tensor fc1_bias;     ///< [T]
  Tensor fc2_weight;   ///< [G, T]
  Tensor fc2_bias;     ///< [G]

  /// The output layer starts at zero so every offset starts at exactly 0.
  static OffsetNetParams init(const InterlaceConfig& cfg, Rng& rng) {
    const std::size_t c = cfg.channels, t = cfg.frames, g = cfg.groups;
    return {init_uniform({1, c, 3}, 3 * c, rng), init_uniform({1}, 3 * c, rng),
            init_uniform({t, t}, t, rng), init_uniform({t}, t, rng),
            Tensor({g, t}), Tensor({g})};
  }

  static OffsetNetParams zeros_like(const OffsetNetParams& p) {
    return {Tensor(p.conv_weight.shape()), Tensor(p.conv_bias.shape()), Tensor(p.fc1_weight.shape()),
            Tensor(p.fc1_bias.shape()), Tensor(p.fc2_weight.shape()), Tensor(p.fc2_bias.shape())};
  }

  template <class F>
  void for_each(F&& f) {
    f("conv_weight", conv_weight);
    f("conv_bias", conv_bias);
    f("fc1_weight", fc1_weight);
    f("fc1_bias", fc1_bias);
    f("fc2_weight", fc2_weight);
    f("fc2_bias", fc2_bias);
  }
};

struct WeightNetParams {
  Tensor conv_weight;  ///< [rows, Cin, 3]
  Tensor conv_bias;    ///< [rows]

  /// Zero kernel and bias: every attention weight starts at exactly 1.
  static WeightNetParams init(const InterlaceConfig& cfg, WeightNetInput input) {
    const std::size_t cin = input == WeightNetInput::descriptor ? cfg.channels : 1;
    return {Tensor({cfg.weight_rows(), cin, 3}), Tensor({cfg.weight_rows()})};
  }

  static WeightNetParams zeros_like(const WeightNetParams& p) {
    return {Tensor(p.conv_weight.shape()), Tensor(p.conv_bias.shape())};
  }

  template <class F>
  void for_each(F&& f) {
    f("conv_weight", conv_weight);
    f("conv_bias", conv_bias);
  }
};

struct OffsetTape {
  Tensor z;           ///< [C, T]
  Tensor s;           ///< [1, T]
  Tensor hidden_pre;  ///< [T]
  Tensor hidden;      ///< [T]
  Tensor logits;      ///< [G]
  Tensor raw;         ///< [G]
};

inline std::pair<Tensor, OffsetTape> offsetnet_forward(const Tensor& z, const OffsetNetParams& p) {
  if (z.rank() != 2 || p.conv_weight.extent(1) != z.extent(0) || p.fc1_weight.extent(1) != z.extent(1))
    throw ShapeError("offsetnet_forward: descriptor " + shape_string(z.shape()) + " does not match parameters");
  OffsetTape tape;
  tape.z = z;
  tape.s = conv1d_same(z, p.conv_weight, p.conv_bias);
  tape.hidden_pre = fc_forward(tape.s.reshape({z.extent(1)}), p.fc1_weight, p.fc1_bias);
  tape.hidden = tape.hidden_pre;
  for (double& v : tape.hidden.data()) v = relu(v);
  tape.logits = fc_forward(tape.hidden, p.fc2_weight, p.fc2_bias);
  tape.raw = sigmoid_forward(tape.logits);
  tape.raw.ensure_finite("offsetnet_forward");
  Tensor raw = tape.raw;
  return {std::move(raw), std::move(tape)};
}

/// offset = (raw - 0.5) * T. With mirroring only the first G/2 raw values
/// are used; the second half of the groups gets their negation.
inline OffsetVector rescale_offsets(const Tensor& raw, std::size_t frames, bool mirror) {
  const std::size_t groups = raw.numel();
  if (mirror && groups % 2 != 0) throw ShapeError("rescale_offsets: mirroring needs an even group count");
  for (double r : raw.data())
    if (!(r > 0.0 && r < 1.0)) throw ShapeError("rescale_offsets: raw offset outside (0, 1)");
  OffsetVector out = OffsetVector::zeros(groups);
  const std::size_t free = mirror ? groups / 2 : groups;
  const double scale = static_cast<double>(frames);
  for (std::size_t g = 0; g < free; ++g) out.values[g] = (raw[g] - 0.5) * scale;
  if (mirror)
    for (std::size_t g = 0; g < free; ++g) out.values[g + free] = -out.values[g];
  return out;
}

inline Tensor rescale_offsets_backward(const Tensor& grad_offsets, std::size_t frames, bool mirror) {
  const std::size_t groups = grad_offsets.numel();
  const std::size_t free = mirror ? groups / 2 : groups;
  const double scale = static_cast<double>(frames);
  Tensor grad_raw({groups});
  for (std::size_t g = 0; g < free; ++g)
    grad_raw[g] = scale * (mirror ? grad_offsets[g] - grad_offsets[g + free] : grad_offsets[g]);
  return grad_raw;
}

struct WeightTape {
  Tensor input;   ///< [Cin, T]
  Tensor logits;  ///< [rows, T]
  Tensor gate;    ///< sigmoid(logits)
};

inline std::pair<WeightMatrix, WeightTape> weightnet_forward(const Tensor& input, const WeightNetParams& p) {
  WeightTape tape;
  tape.input = input;
  tape.logits = conv1d_same(input, p.conv_weight, p.conv_bias);
  tape.gate = sigmoid_forward(tape.logits);
  WeightMatrix w{tape.gate * 2.0};
  return {std::move(w), std::move(tape)};
}

struct NetsGrads {
  OffsetNetParams offset_net;
  WeightNetParams weight_net;
  Tensor z;  ///< [C, T], both branches summed
};

/// Backward through rescale, OffsetNet and WeightNet. `cfg` supplies T and
/// the mirroring mode; `input` says which signal WeightNet consumed.
inline NetsGrads nets_backward(const Tensor& grad_offsets, const Tensor& grad_weights,
                               const OffsetTape& otape, const WeightTape& wtape,
                               const OffsetNetParams& onet, const WeightNetParams& wnet,
                               const InterlaceConfig& cfg, WeightNetInput input) {
  const std::size_t frames = otape.z.extent(1);
  if (grad_offsets.numel() != otape.raw.numel() || grad_weights.shape() != wtape.gate.shape())
    throw ShapeError("nets_backward: gradients do not match tapes");

  // WeightNet: E = 2 * sigmoid(a)
  const Tensor grad_wlogits = sigmoid_backward(wtape.gate, grad_weights * 2.0);
  Conv1dGrads wconv = conv1d_same_backward(wtape.input, wnet.conv_weight, grad_wlogits);

  // OffsetNet
  const Tensor grad_raw = rescale_offsets_backward(grad_offsets, frames, cfg.mirror);
  const Tensor grad_logits = sigmoid_backward(otape.raw, grad_raw);
  FcGrads fc2 = fc_backward(otape.hidden, onet.fc2_weight, grad_logits);
  Tensor grad_hidden_pre = fc2.input;
  for (std::size_t i = 0; i < grad_hidden_pre.numel(); ++i)
    if (!(otape.hidden_pre[i] > 0.0)) grad_hidden_pre[i] = 0.0;
  FcGrads fc1 = fc_backward(otape.s.reshape({frames}), onet.fc1_weight, grad_hidden_pre);
  Tensor grad_s = fc1.input.reshape({1, frames});
  if (input == WeightNetInput::pooled) grad_s += wconv.input;
  Conv1dGrads oconv = conv1d_same_backward(otape.z, onet.conv_weight, grad_s);

  NetsGrads out{{std::move(oconv.weight), std::move(oconv.bias), std::move(fc1.weight), std::move(fc1.bias),
                 std::move(fc2.weight), std::move(fc2.bias)},
                {std::move(wconv.weight), std::move(wconv.bias)},
                std::move(oconv.input)};
  if (input == WeightNetInput::descriptor) out.z += wconv.input;
  return out;
}

}  // namespace tin
