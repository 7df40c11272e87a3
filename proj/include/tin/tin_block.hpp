#pragma once

// Full TIN module: pool -> OffsetNet / WeightNet -> interlace.

#include <string>
#include <utility>
#include <vector>

#include "tin/interlace.hpp"
#include "tin/nets.hpp"
#include "tin/tensor.hpp"

namespace tin {

struct TinBlock {
  InterlaceConfig cfg;
  WeightNetInput weight_input = WeightNetInput::descriptor;
  OffsetNetParams offset_net;
  WeightNetParams weight_net;

  static TinBlock create(const InterlaceConfig& cfg, Rng& rng,
                         WeightNetInput weight_input = WeightNetInput::descriptor) {
    cfg.validate();
    return {cfg, weight_input, OffsetNetParams::init(cfg, rng), WeightNetParams::init(cfg, weight_input)};
  }

  /// Visits parameters as ("offset_net.fc1_weight", tensor) and so on.
  template <class F>
  void for_each_param(F&& f) {
    offset_net.for_each([&](const char* n, Tensor& t) { f(std::string("offset_net.") + n, t); });
    weight_net.for_each([&](const char* n, Tensor& t) { f(std::string("weight_net.") + n, t); });
  }
};

struct TinTape {
  Shape input_shape;
  OffsetTape offset_tape;
  WeightTape weight_tape;
  OffsetVector offsets;
  WeightMatrix weights;
  InterlaceTape<double> interlace;
};

struct TinGrads {
  Tensor input;
  OffsetNetParams offset_net;
  WeightNetParams weight_net;
};

/// Offsets and attention the block would use for clip `u`.
inline std::pair<OffsetVector, WeightMatrix> tin_parameters(const TinBlock& block, const Tensor& u,
                                                            OffsetTape* otape = nullptr,
                                                            WeightTape* wtape = nullptr) {
  const Tensor z = pool_descriptor(u);
  auto [raw, ot] = offsetnet_forward(z, block.offset_net);
  OffsetVector offsets = rescale_offsets(raw, block.cfg.frames, block.cfg.mirror);
  const Tensor& wn_input = block.weight_input == WeightNetInput::descriptor ? z : ot.s;
  auto [weights, wt] = weightnet_forward(wn_input, block.weight_net);
  if (otape) *otape = std::move(ot);
  if (wtape) *wtape = std::move(wt);
  return {std::move(offsets), std::move(weights)};
}

inline std::pair<Tensor, TinTape> tin_forward(const TinBlock& block, const Tensor& u) {
  detail::require_clip(u.shape(), "tin_forward");
  if (u.extent(0) != block.cfg.frames || u.extent(1) != block.cfg.channels)
    throw ShapeError("tin_forward: input " + shape_string(u.shape()) + " does not match block");
  TinTape tape;
  tape.input_shape = u.shape();
  auto [offsets, weights] = tin_parameters(block, u, &tape.offset_tape, &tape.weight_tape);
  auto [v, itape] = interlace_forward(u, offsets, weights, block.cfg);
  tape.offsets = std::move(offsets);
  tape.weights = std::move(weights);
  tape.interlace = std::move(itape);
  return {std::move(v), std::move(tape)};
}

/// With `detach_params` the offsets and weights are treated as constants:
/// only the interlace path contributes to the input gradient and the
/// parameter gradients are zero.
inline TinGrads tin_backward(const TinBlock& block, const Tensor& grad_v, TinTape&& tape,
                             bool detach_params = false) {
  if (grad_v.shape() != tape.input_shape) throw ShapeError("tin_backward: gradient shape mismatch");
  InterlaceGrads<double> ig = interlace_backward(grad_v, std::move(tape.interlace));
  if (detach_params)
    return {std::move(ig.input), OffsetNetParams::zeros_like(block.offset_net),
            WeightNetParams::zeros_like(block.weight_net)};
  NetsGrads ng = nets_backward(ig.offsets, ig.weights, tape.offset_tape, tape.weight_tape, block.offset_net,
                               block.weight_net, block.cfg, block.weight_input);
  Tensor grad_u = std::move(ig.input);
  grad_u += pool_descriptor_backward(ng.z, tape.input_shape);
  return {std::move(grad_u), std::move(ng.offset_net), std::move(ng.weight_net)};
}

}  // namespace tin
