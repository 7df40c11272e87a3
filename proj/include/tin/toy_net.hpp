#pragma once

// Small per-frame video classifiers used to exercise the TIN block:
//
//   conv3x3/2 -> ReLU -> [temporal] -> conv3x3 -> ReLU -> spatial mean
//   -> temporal mean -> linear
//
// Without a temporal layer the network only sees the multiset of frames,
// so it cannot separate clips that differ in frame order.

#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "tin/layers.hpp"
#include "tin/tin_block.hpp"

namespace tin {

struct Conv2dLayer {
  Tensor weight;  ///< [Cout, Cin, k, k]
  Tensor bias;    ///< [Cout]
  std::size_t stride = 1;
};
struct ReluLayer {};
struct TinLayer {
  TinBlock block;
};
/// Trainable depthwise 3-tap temporal convolution over every channel.
struct TemporalConvLayer {
  Tensor kernel;  ///< [C, 3]
};
struct SpatialMeanLayer {};
struct TemporalMeanLayer {};
struct LinearLayer {
  Tensor weight;  ///< [K, C]
  Tensor bias;    ///< [K]
};

using Layer = std::variant<Conv2dLayer, ReluLayer, TinLayer, TemporalConvLayer, SpatialMeanLayer,
                           TemporalMeanLayer, LinearLayer>;

struct NamedParam {
  std::string name;
  Tensor* value;
};

enum class TemporalMode { none, tin, tcn };

inline const char* to_string(TemporalMode m) {
  switch (m) {
    case TemporalMode::none: return "none";
    case TemporalMode::tin: return "tin";
    case TemporalMode::tcn: return "tcn";
  }
  return "?";
}

struct ToyNetSpec {
  std::size_t frames = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t in_channels = 1;
  std::size_t channels = 16;
  std::size_t classes = 2;
  TemporalMode temporal = TemporalMode::tin;
  std::size_t groups = 4;
  double shift_fraction = 0.25;
  bool mirror = true;
  bool weight_all_channels = false;
  WeightNetInput weight_input = WeightNetInput::descriptor;

  InterlaceConfig interlace() const {
    InterlaceConfig cfg;
    cfg.frames = frames;
    cfg.channels = channels;
    cfg.groups = groups;
    cfg.shift_fraction = shift_fraction;
    cfg.mirror = mirror;
    cfg.weight_all_channels = weight_all_channels;
    return cfg;
  }
};

inline Conv2dLayer make_conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, Rng& rng) {
  const std::size_t fan_in = cin * k * k;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return {rand_uniform({cout, cin, k, k}, rng, -bound, bound), Tensor({cout}), stride};
}

inline TemporalConvLayer make_identity_tconv(std::size_t channels) {
  Tensor k({channels, 3});
  for (std::size_t c = 0; c < channels; ++c) k[c * 3 + 1] = 1.0;
  return {std::move(k)};
}

class ToyNet {
 public:
  std::vector<Layer> layers;

  static ToyNet build(const ToyNetSpec& spec, Rng& rng) {
    ToyNet net;
    net.layers.push_back(make_conv(spec.in_channels, spec.channels, 3, 2, rng));
    net.layers.push_back(ReluLayer{});
    if (auto t = make_temporal(spec, rng)) net.layers.push_back(std::move(*t));
    net.layers.push_back(make_conv(spec.channels, spec.channels, 3, 1, rng));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(SpatialMeanLayer{});
    net.layers.push_back(TemporalMeanLayer{});
    net.layers.push_back(LinearLayer{init_uniform({spec.classes, spec.channels}, spec.channels, rng),
                                     init_uniform({spec.classes}, spec.channels, rng)});
    return net;
  }

  static std::optional<Layer> make_temporal(const ToyNetSpec& spec, Rng& rng) {
    switch (spec.temporal) {
      case TemporalMode::none: return std::nullopt;
      case TemporalMode::tin: return TinLayer{TinBlock::create(spec.interlace(), rng, spec.weight_input)};
      case TemporalMode::tcn: return make_identity_tconv(spec.channels);
    }
    return std::nullopt;
  }

  /// Copy with every TIN and temporal-conv layer removed.
  ToyNet without_temporal() const {
    ToyNet out;
    for (const Layer& l : layers)
      if (!std::holds_alternative<TinLayer>(l) && !std::holds_alternative<TemporalConvLayer>(l)) out.layers.push_back(l);
    return out;
  }

  std::vector<std::size_t> tin_layer_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (std::holds_alternative<TinLayer>(layers[i])) idx.push_back(i);
    return idx;
  }

  std::vector<NamedParam> params() {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string prefix = "layer" + std::to_string(i) + ".";
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2dLayer>) {
              out.push_back({prefix + "conv.weight", &l.weight});
              out.push_back({prefix + "conv.bias", &l.bias});
            } else if constexpr (std::is_same_v<L, TinLayer>) {
              l.block.for_each_param([&](const std::string& n, Tensor& t) { out.push_back({prefix + "tin." + n, &t}); });
            } else if constexpr (std::is_same_v<L, TemporalConvLayer>) {
              out.push_back({prefix + "tconv.kernel", &l.kernel});
            } else if constexpr (std::is_same_v<L, LinearLayer>) {
              out.push_back({prefix + "linear.weight", &l.weight});
              out.push_back({prefix + "linear.bias", &l.bias});
            }
          },
          layers[i]);
    }
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& p : params()) n += p.value->numel();
    return n;
  }

  struct Trace {
    std::vector<Tensor> inputs;               ///< input of every layer
    std::vector<std::optional<TinTape>> tin;  ///< tapes of TIN layers
    Tensor logits;
  };

  Tensor forward(const Tensor& clip) const { return forward_trace(clip, false).logits; }

  /// `keep_tin` alone keeps the TIN tapes without the layer inputs.
  Trace forward_trace(const Tensor& clip, bool keep = true, bool keep_tin = false) const {
    keep_tin = keep_tin || keep;
    Trace tr;
    tr.tin.resize(layers.size());
    Tensor x = clip;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (keep) tr.inputs.push_back(x);
      x = std::visit(
          [&](const auto& l) -> Tensor {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2dLayer>) {
              return conv2d_forward(x, l.weight, l.bias, l.stride);
            } else if constexpr (std::is_same_v<L, ReluLayer>) {
              return relu_forward(x);
            } else if constexpr (std::is_same_v<L, TinLayer>) {
              auto [v, tape] = tin_forward(l.block, x);
              if (keep_tin) tr.tin[i] = std::move(tape);
              return std::move(v);
            } else if constexpr (std::is_same_v<L, TemporalConvLayer>) {
              return temporal_conv3_forward(x, l.kernel);
            } else if constexpr (std::is_same_v<L, SpatialMeanLayer>) {
              return spatial_mean(x);
            } else if constexpr (std::is_same_v<L, TemporalMeanLayer>) {
              return temporal_mean(x);
            } else {
              return fc_forward(x, l.weight, l.bias);
            }
          },
          layers[i]);
    }
    tr.logits = std::move(x);
    return tr;
  }

  /// Parameter gradients in params() order. The input gradient is written
  /// to `grad_input` when given.
  std::vector<Tensor> backward(Trace&& tr, const Tensor& grad_logits, Tensor* grad_input = nullptr) const {
    if (tr.inputs.size() != layers.size()) throw ShapeError("ToyNet::backward: trace was recorded without tapes");
    std::vector<std::vector<Tensor>> per_layer(layers.size());
    Tensor g = grad_logits;
    for (std::size_t i = layers.size(); i-- > 0;) {
      const Tensor& x = tr.inputs[i];
      const bool need_input = i > 0 || grad_input != nullptr;
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2dLayer>) {
              auto cg = conv2d_backward(x, l.weight, g, l.stride, need_input);
              per_layer[i] = {std::move(cg.weight), std::move(cg.bias)};
              g = std::move(cg.input);
            } else if constexpr (std::is_same_v<L, ReluLayer>) {
              g = relu_backward(x, g);
            } else if constexpr (std::is_same_v<L, TinLayer>) {
              TinGrads tg = tin_backward(l.block, g, std::move(*tr.tin[i]));
              std::vector<Tensor> grads;
              tg.offset_net.for_each([&](const char*, Tensor& t) { grads.push_back(std::move(t)); });
              tg.weight_net.for_each([&](const char*, Tensor& t) { grads.push_back(std::move(t)); });
              per_layer[i] = std::move(grads);
              g = std::move(tg.input);
            } else if constexpr (std::is_same_v<L, TemporalConvLayer>) {
              auto tg = temporal_conv3_backward(x, l.kernel, g);
              per_layer[i] = {std::move(tg.kernel)};
              g = std::move(tg.input);
            } else if constexpr (std::is_same_v<L, SpatialMeanLayer>) {
              g = spatial_mean_backward(g, x.shape());
            } else if constexpr (std::is_same_v<L, TemporalMeanLayer>) {
              g = temporal_mean_backward(g, x.shape());
            } else {
              auto fg = fc_backward(x, l.weight, g);
              per_layer[i] = {std::move(fg.weight), std::move(fg.bias)};
              g = std::move(fg.input);
            }
          },
          layers[i]);
    }
    if (grad_input) *grad_input = std::move(g);
    std::vector<Tensor> out;
    for (auto& v : per_layer)
      for (auto& t : v) out.push_back(std::move(t));
    return out;
  }
};

struct BatchResult {
  double loss = 0.0;  ///< mean over the batch
  std::size_t correct = 0;
  std::vector<Tensor> grads;  ///< gradient of the mean loss, params() order
};

/// Mean cross-entropy and its gradient over `indices`, summed in index order.
inline BatchResult batch_gradients(ToyNet& net, const std::vector<Tensor>& clips,
                                   const std::vector<std::size_t>& labels,
                                   std::span<const std::size_t> indices) {
  BatchResult out;
  for (auto& p : net.params()) out.grads.emplace_back(p.value->shape());
  const double scale = 1.0 / static_cast<double>(indices.size());
  for (std::size_t idx : indices) {
    auto tr = net.forward_trace(clips[idx]);
    CrossEntropy ce = softmax_cross_entropy(tr.logits, labels[idx]);
    out.loss += ce.loss * scale;
    if (ce.predicted == labels[idx]) ++out.correct;
    ce.grad_logits *= scale;
    std::vector<Tensor> g = net.backward(std::move(tr), ce.grad_logits);
    for (std::size_t i = 0; i < g.size(); ++i) out.grads[i] += g[i];
  }
  return out;
}

}  // namespace tin
