#pragma once

// Temporal interlacing: grouped fractional temporal shift with per-frame
// attention, plus its exact backward pass.
//
// Layout of a clip is [T, C, H, W]. Shifted groups occupy the lowest channel
// indices, contiguously and group-major; the un-shifted channels follow.
// Output frame t of a shifted group with offset O reads the input at the
// fractional position t + O:
//
//   v[t] = E[t] * ((n0 + 1 - O) * u[t + n0] + (O - n0) * u[t + n0 + 1]),  n0 = floor(O)
//
// Source frames outside [0, T-1] read as zero, which gives a one-frame
// interpolation buffer on each side of the clip.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tin/tensor.hpp"

namespace tin {

struct InterlaceConfig {
  std::size_t frames = 8;
  std::size_t channels = 64;
  /// Number of shifted groups, counting mirrored ones. 0 disables shifting.
  std::size_t groups = 4;
  double shift_fraction = 0.25;
  /// Second half of the groups uses the negated offsets of the first half.
  bool mirror = true;
  /// Adds one attention row that re-weights the un-shifted channels.
  bool weight_all_channels = false;

  std::size_t shifted_channels() const {
    const double exact = static_cast<double>(channels) * shift_fraction;
    const double rounded = std::round(exact);
    if (shift_fraction < 0.0 || shift_fraction > 1.0 || std::abs(exact - rounded) > 1e-9)
      throw ShapeError("channels * shift_fraction is not a whole channel count");
    return static_cast<std::size_t>(rounded);
  }

  std::size_t group_width() const { return groups == 0 ? 0 : shifted_channels() / groups; }
  std::size_t learned_groups() const { return mirror ? groups / 2 : groups; }
  std::size_t weight_rows() const { return groups + (weight_all_channels ? 1 : 0); }

  void validate() const {
    if (frames == 0) throw ShapeError("frames must be positive");
    if (channels == 0) throw ShapeError("channels must be positive");
    const std::size_t shifted = shifted_channels();
    if (groups == 0) return;
    if (shifted == 0 || shifted % groups != 0)
      throw ShapeError("shifted channel count " + std::to_string(shifted) +
                       " is not divisible into " + std::to_string(groups) + " groups");
    if (mirror && groups % 2 != 0) throw ShapeError("mirrored offsets need an even group count");
  }
};

struct ChannelRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::optional<std::size_t> group;  ///< empty for the un-shifted range

  std::size_t size() const { return end - begin; }
  bool operator==(const ChannelRange&) const = default;
};

/// G equal shifted ranges followed by the un-shifted remainder (if any).
inline std::vector<ChannelRange> partition_channels(const InterlaceConfig& cfg) {
  cfg.validate();
  std::vector<ChannelRange> ranges;
  const std::size_t width = cfg.group_width();
  for (std::size_t g = 0; g < cfg.groups; ++g) ranges.push_back({g * width, (g + 1) * width, g});
  const std::size_t shifted = cfg.groups * width;
  if (shifted < cfg.channels) ranges.push_back({shifted, cfg.channels, std::nullopt});
  return ranges;
}

/// Per-group temporal offsets, shape [G], each strictly inside (-T/2, T/2).
struct OffsetVector {
  Tensor values;

  std::size_t size() const { return values.numel(); }
  double operator[](std::size_t g) const { return values[g]; }

  static OffsetVector zeros(std::size_t groups) { return {Tensor({groups})}; }

  void validate(const InterlaceConfig& cfg) const {
    if (values.shape() != Shape{cfg.groups})
      throw ShapeError("offsets shape " + shape_string(values.shape()) + " does not match " +
                       std::to_string(cfg.groups) + " groups");
    const double half = static_cast<double>(cfg.frames) / 2.0;
    for (std::size_t g = 0; g < cfg.groups; ++g) {
      if (!std::isfinite(values[g])) throw NonFiniteError("offset is not finite");
      if (!(std::abs(values[g]) < half))
        throw ShapeError("offset " + std::to_string(values[g]) + " outside (-T/2, T/2)");
    }
    if (cfg.mirror) {
      const std::size_t half_g = cfg.groups / 2;
      for (std::size_t g = 0; g < half_g; ++g)
        if (values[g + half_g] != -values[g]) throw ShapeError("mirrored offsets are not negated");
    }
  }
};

/// Per-group, per-frame attention weights, shape [rows, T], entries in (0, 2).
struct WeightMatrix {
  Tensor values;

  double operator()(std::size_t row, std::size_t t) const {
    return values[row * values.extent(1) + t];
  }

  static WeightMatrix ones(std::size_t rows, std::size_t frames) {
    return {Tensor::full({rows, frames}, 1.0)};
  }

  void validate(const InterlaceConfig& cfg) const {
    if (values.shape() != Shape{cfg.weight_rows(), cfg.frames})
      throw ShapeError("weights shape " + shape_string(values.shape()) + " does not match config");
    for (double w : values.data()) {
      if (!std::isfinite(w)) throw NonFiniteError("attention weight is not finite");
      if (!(w > 0.0 && w < 2.0)) throw ShapeError("attention weight outside (0, 2)");
    }
  }
};

/// Integer part and fraction of a temporal offset, f in [0, 1).
struct SampleStencil {
  long floor = 0;
  double frac = 0.0;

  static SampleStencil of(double offset) {
    const double fl = std::floor(offset);
    return {static_cast<long>(fl), offset - fl};
  }
  double lower_weight(double offset) const { return static_cast<double>(floor) + 1.0 - offset; }
  double upper_weight(double offset) const { return offset - static_cast<double>(floor); }
};

namespace detail {

inline bool frame_in_range(long t, std::size_t frames) {
  return t >= 0 && t < static_cast<long>(frames);
}

inline void require_clip(const Shape& shape, std::string_view what) {
  if (shape.size() != 4) throw ShapeError(std::string(what) + ": expected [T,C,H,W], got " + shape_string(shape));
}

// Shifts channels [c_begin, c_end) of `in` into `out`. `frame_weight` may be
// null for unit attention. The attention factor is folded into the two taps.
template <std::floating_point T>
void sample_range(const T* in, T* out, std::size_t frames, std::size_t channels,
                  std::size_t plane, std::size_t c_begin, std::size_t c_end, double offset,
                  const double* frame_weight) {
  const auto st = SampleStencil::of(offset);
  const std::size_t span = (c_end - c_begin) * plane;
  for (std::size_t t = 0; t < frames; ++t) {
    const double e = frame_weight ? frame_weight[t] : 1.0;
    const long a = static_cast<long>(t) + st.floor;
    const long b = a + 1;
    const T wa = frame_in_range(a, frames) ? static_cast<T>(st.lower_weight(offset) * e) : T(0);
    const T wb = frame_in_range(b, frames) ? static_cast<T>(st.upper_weight(offset) * e) : T(0);
    T* dst = out + (t * channels + c_begin) * plane;
    const T* src_a = wa != T(0) ? in + (static_cast<std::size_t>(a) * channels + c_begin) * plane : nullptr;
    const T* src_b = wb != T(0) ? in + (static_cast<std::size_t>(b) * channels + c_begin) * plane : nullptr;
    if (src_a && src_b) {
      for (std::size_t i = 0; i < span; ++i) dst[i] = wa * src_a[i] + wb * src_b[i];
    } else if (src_a) {
      for (std::size_t i = 0; i < span; ++i) dst[i] = wa * src_a[i];
    } else if (src_b) {
      for (std::size_t i = 0; i < span; ++i) dst[i] = wb * src_b[i];
    } else {
      std::fill(dst, dst + span, T(0));
    }
  }
}

}  // namespace detail

/// Fractional temporal shift of a whole [T, C', H, W] slice by one offset.
template <std::floating_point T>
BasicTensor<T> temporal_sample(const BasicTensor<T>& u, double offset) {
  detail::require_clip(u.shape(), "temporal_sample");
  const std::size_t frames = u.extent(0);
  if (!(std::abs(offset) < static_cast<double>(frames) / 2.0))
    throw ShapeError("temporal_sample: offset outside (-T/2, T/2)");
  const std::size_t channels = u.extent(1);
  const std::size_t plane = u.extent(2) * u.extent(3);
  BasicTensor<T> v(u.shape());
  detail::sample_range(u.ptr(), v.ptr(), frames, channels, plane, 0, channels, offset, nullptr);
  return v;
}

namespace detail {

inline void check_operands(const Shape& shape, const OffsetVector& offsets,
                           const WeightMatrix& weights, const InterlaceConfig& cfg) {
  require_clip(shape, "interlace");
  cfg.validate();
  if (shape[0] != cfg.frames || shape[1] != cfg.channels)
    throw ShapeError("interlace: input " + shape_string(shape) + " does not match config T=" +
                     std::to_string(cfg.frames) + " C=" + std::to_string(cfg.channels));
  offsets.validate(cfg);
  weights.validate(cfg);
}

}  // namespace detail

/// Forward pass without recording a tape; writes into `v` (same shape as u).
template <std::floating_point T>
void interlace_apply(const BasicTensor<T>& u, const OffsetVector& offsets,
                     const WeightMatrix& weights, const InterlaceConfig& cfg, BasicTensor<T>& v) {
  detail::check_operands(u.shape(), offsets, weights, cfg);
  if (v.shape() != u.shape()) v = BasicTensor<T>(u.shape());
  const std::size_t frames = cfg.frames;
  const std::size_t channels = cfg.channels;
  const std::size_t plane = u.extent(2) * u.extent(3);
  const T* in = u.ptr();
  T* out = v.ptr();
  for (const ChannelRange& r : partition_channels(cfg)) {
    if (r.group) {
      detail::sample_range(in, out, frames, channels, plane, r.begin, r.end, offsets[*r.group],
                           weights.values.ptr() + *r.group * frames);
      continue;
    }
    const double* row = cfg.weight_all_channels ? weights.values.ptr() + cfg.groups * frames : nullptr;
    const std::size_t span = r.size() * plane;
    for (std::size_t t = 0; t < frames; ++t) {
      const T* src = in + (t * channels + r.begin) * plane;
      T* dst = out + (t * channels + r.begin) * plane;
      if (row) {
        const T e = static_cast<T>(row[t]);
        for (std::size_t i = 0; i < span; ++i) dst[i] = e * src[i];
      } else {
        std::copy(src, src + span, dst);
      }
    }
  }
}

/// Forward intermediates needed by interlace_backward.
template <std::floating_point T>
struct InterlaceTape {
  BasicTensor<T> input;
  OffsetVector offsets;
  WeightMatrix weights;
  std::vector<SampleStencil> stencils;  ///< per group floor / fraction
  InterlaceConfig cfg;
};

template <std::floating_point T>
struct InterlaceGrads {
  BasicTensor<T> input;
  Tensor offsets;  ///< [G]
  Tensor weights;  ///< [rows, T]
};

template <std::floating_point T>
std::pair<BasicTensor<T>, InterlaceTape<T>> interlace_forward(const BasicTensor<T>& u,
                                                              const OffsetVector& offsets,
                                                              const WeightMatrix& weights,
                                                              const InterlaceConfig& cfg) {
  BasicTensor<T> v(u.shape());
  interlace_apply(u, offsets, weights, cfg, v);
  InterlaceTape<T> tape{u, offsets, weights, {}, cfg};
  for (std::size_t g = 0; g < cfg.groups; ++g) tape.stencils.push_back(SampleStencil::of(offsets[g]));
  return {std::move(v), std::move(tape)};
}

/// Vector-Jacobian products of interlace_forward. At an integer offset the
/// offset gradient is the right-hand derivative (fraction taken as 0).
template <std::floating_point T>
InterlaceGrads<T> interlace_backward(const BasicTensor<T>& grad_v, InterlaceTape<T>&& tape) {
  const InterlaceConfig& cfg = tape.cfg;
  const BasicTensor<T>& u = tape.input;
  grad_v.require_same_shape(u, "interlace_backward");
  const std::size_t frames = cfg.frames;
  const std::size_t channels = cfg.channels;
  const std::size_t plane = u.extent(2) * u.extent(3);

  InterlaceGrads<T> grads{BasicTensor<T>(u.shape()), Tensor({cfg.groups}),
                          Tensor({cfg.weight_rows(), frames})};
  const T* in = u.ptr();
  const T* gv = grad_v.ptr();
  T* gu = grads.input.ptr();

  for (const ChannelRange& r : partition_channels(cfg)) {
    const std::size_t span = r.size() * plane;
    if (!r.group) {
      const double* row = cfg.weight_all_channels ? tape.weights.values.ptr() + cfg.groups * frames : nullptr;
      for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t base = (t * channels + r.begin) * plane;
        if (!row) {
          std::copy(gv + base, gv + base + span, gu + base);
          continue;
        }
        long double dot = 0;
        const T e = static_cast<T>(row[t]);
        for (std::size_t i = 0; i < span; ++i) {
          gu[base + i] = e * gv[base + i];
          dot += static_cast<long double>(in[base + i]) * gv[base + i];
        }
        grads.weights[cfg.groups * frames + t] = static_cast<double>(dot);
      }
      continue;
    }
    const std::size_t g = *r.group;
    const double offset = tape.offsets[g];
    const SampleStencil st = tape.stencils[g];
    const double lo_w = st.lower_weight(offset);
    const double hi_w = st.upper_weight(offset);
    long double d_offset = 0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double e = tape.weights(g, t);
      const long a = static_cast<long>(t) + st.floor;
      const long b = a + 1;
      const bool has_a = detail::frame_in_range(a, frames);
      const bool has_b = detail::frame_in_range(b, frames);
      const T* src_a = has_a ? in + (static_cast<std::size_t>(a) * channels + r.begin) * plane : nullptr;
      const T* src_b = has_b ? in + (static_cast<std::size_t>(b) * channels + r.begin) * plane : nullptr;
      const T* g_out = gv + (t * channels + r.begin) * plane;
      long double d_weight = 0;
      long double d_diff = 0;
      for (std::size_t i = 0; i < span; ++i) {
        const double ua = src_a ? static_cast<double>(src_a[i]) : 0.0;
        const double ub = src_b ? static_cast<double>(src_b[i]) : 0.0;
        const double go = static_cast<double>(g_out[i]);
        d_weight += (lo_w * ua + hi_w * ub) * go;
        d_diff += (ub - ua) * go;
      }
      grads.weights[g * frames + t] = static_cast<double>(d_weight);
      d_offset += e * d_diff;
      if (has_a) {
        T* dst = gu + (static_cast<std::size_t>(a) * channels + r.begin) * plane;
        const T w = static_cast<T>(lo_w * e);
        for (std::size_t i = 0; i < span; ++i) dst[i] += w * g_out[i];
      }
      if (has_b) {
        T* dst = gu + (static_cast<std::size_t>(b) * channels + r.begin) * plane;
        const T w = static_cast<T>(hi_w * e);
        for (std::size_t i = 0; i < span; ++i) dst[i] += w * g_out[i];
      }
    }
    grads.offsets[g] = static_cast<double>(d_offset);
  }
  return grads;
}

template <std::floating_point T>
struct TemporalSampleGrads {
  BasicTensor<T> input;
  double offset = 0.0;
};

/// Backward of temporal_sample, via a single group spanning every channel.
template <std::floating_point T>
TemporalSampleGrads<T> temporal_sample_backward(const BasicTensor<T>& u, double offset, const BasicTensor<T>& grad_v) {
  detail::require_clip(u.shape(), "temporal_sample_backward");
  InterlaceConfig cfg;
  cfg.frames = u.extent(0);
  cfg.channels = u.extent(1);
  cfg.groups = 1;
  cfg.shift_fraction = 1.0;
  cfg.mirror = false;
  OffsetVector offsets{Tensor::full({1}, offset)};
  offsets.validate(cfg);
  InterlaceTape<T> tape{u, std::move(offsets), WeightMatrix::ones(1, cfg.frames), {SampleStencil::of(offset)}, cfg};
  InterlaceGrads<T> g = interlace_backward(grad_v, std::move(tape));
  return {std::move(g.input), g.offsets[0]};
}

}  // namespace tin
