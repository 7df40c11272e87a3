#pragma once

// Temporal convolution view of the interlace operator.
//
// A shifted group with offset O and attention row w is a two-tap temporal
// convolution with taps (n0+1-O)*w[t] at relative frame n0 and (O-n0)*w[t]
// at n0+1. The dense reference convolution below is a plain nested loop
// with zero padding and shares no code with the interlace kernels.

#include <map>
#include <string>
#include <vector>

#include "tin/interlace.hpp"
#include "tin/tensor.hpp"

namespace tin {

struct KernelTap {
  long position = 0;
  double value = 0.0;
  bool operator==(const KernelTap&) const = default;
};

/// Two taps per (group, frame); the un-shifted partition is stored as an
/// extra row with a single tap at position 0.
struct EquivKernel {
  std::size_t groups = 0;
  std::size_t frames = 0;
  std::vector<std::vector<KernelTap>> rows;  ///< index: row * frames + t

  const std::vector<KernelTap>& taps(std::size_t row, std::size_t t) const {
    return rows.at(row * frames + t);
  }
};

inline EquivKernel build_equiv_kernel(const OffsetVector& offsets, const WeightMatrix& weights,
                                      const InterlaceConfig& cfg) {
  cfg.validate();
  offsets.validate(cfg);
  weights.validate(cfg);
  EquivKernel k{cfg.groups, cfg.frames, {}};
  k.rows.reserve((cfg.groups + 1) * cfg.frames);
  for (std::size_t g = 0; g < cfg.groups; ++g) {
    const double o = offsets[g];
    const auto st = SampleStencil::of(o);
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const double w = weights(g, t);
      k.rows.push_back({{st.floor, st.lower_weight(o) * w}, {st.floor + 1, st.upper_weight(o) * w}});
    }
  }
  for (std::size_t t = 0; t < cfg.frames; ++t)
    k.rows.push_back({{0, cfg.weight_all_channels ? weights(cfg.groups, t) : 1.0}});
  return k;
}

/// Per-channel, per-output-frame taps over relative positions [-T, T].
/// Stored as [C, T, 2T + 1]; index 0 of the last axis is position -T.
struct DenseTemporalKernel {
  Tensor taps;

  std::size_t channels() const { return taps.extent(0); }
  std::size_t frames() const { return taps.extent(1); }
  long radius() const { return static_cast<long>(taps.extent(1)); }

  static DenseTemporalKernel zeros(std::size_t channels, std::size_t frames) {
    return {Tensor({channels, frames, 2 * frames + 1})};
  }

  double& at(std::size_t c, std::size_t t, long position) {
    const long r = radius();
    if (position < -r || position > r) throw ShapeError("kernel tap outside [-T, T]");
    return taps(c, t, static_cast<std::size_t>(position + r));
  }

  /// Time-invariant kernel from per-channel taps [C, K] centred on position 0.
  static DenseTemporalKernel from_centered(const Tensor& per_channel, std::size_t frames) {
    if (per_channel.rank() != 2 || per_channel.extent(1) % 2 == 0)
      throw ShapeError("centred kernel must be [C, K] with odd K");
    const long half = static_cast<long>(per_channel.extent(1) / 2);
    if (half > static_cast<long>(frames)) throw ShapeError("kernel support exceeds [-T, T]");
    auto k = zeros(per_channel.extent(0), frames);
    for (std::size_t c = 0; c < per_channel.extent(0); ++c)
      for (std::size_t t = 0; t < frames; ++t)
        for (long s = -half; s <= half; ++s) k.at(c, t, s) = per_channel(c, static_cast<std::size_t>(s + half));
    return k;
  }
};

inline DenseTemporalKernel to_dense(const EquivKernel& k, const InterlaceConfig& cfg) {
  auto dense = DenseTemporalKernel::zeros(cfg.channels, cfg.frames);
  for (const ChannelRange& r : partition_channels(cfg)) {
    const std::size_t row = r.group ? *r.group : cfg.groups;
    for (std::size_t c = r.begin; c < r.end; ++c)
      for (std::size_t t = 0; t < cfg.frames; ++t)
        for (const KernelTap& tap : k.taps(row, t)) dense.at(c, t, tap.position) += tap.value;
  }
  return dense;
}

/// V[t, c] = sum_s K[c, t, s] * U[t + s, c], zero outside [0, T-1].
template <std::floating_point T>
BasicTensor<T> dense_tconv(const BasicTensor<T>& u, const DenseTemporalKernel& kernel) {
  if (u.rank() != 4) throw ShapeError("dense_tconv: expected [T,C,H,W]");
  const std::size_t frames = u.extent(0);
  const std::size_t channels = u.extent(1);
  if (kernel.taps.rank() != 3 || kernel.channels() != channels || kernel.frames() != frames ||
      kernel.taps.extent(2) != 2 * frames + 1)
    throw ShapeError("dense_tconv: kernel support does not match input");
  const std::size_t h = u.extent(2);
  const std::size_t w = u.extent(3);
  const long r = kernel.radius();
  BasicTensor<T> v(u.shape());
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (long s = -r; s <= r; ++s) {
            const long src = static_cast<long>(t) + s;
            if (src < 0 || src >= static_cast<long>(frames)) continue;
            const double tap = kernel.taps(c, t, static_cast<std::size_t>(s + r));
            if (tap == 0.0) continue;
            acc += tap * static_cast<double>(u(static_cast<std::size_t>(src), c, y, x));
          }
          v(t, c, y, x) = static_cast<T>(acc);
        }
  return v;
}

struct EquivReport {
  double max_abs_diff = 0.0;
  std::vector<double> group_max_diff;  ///< one per shifted group
  double unshifted_max_diff = 0.0;
  double tol = 1e-9;
  bool passed = false;
};

/// Compares interlace_forward against dense_tconv of the equivalent kernel.
template <std::floating_point T>
EquivReport verify_equivalence(const BasicTensor<T>& u, const OffsetVector& offsets,
                               const WeightMatrix& weights, const InterlaceConfig& cfg, double tol) {
  BasicTensor<T> direct(u.shape());
  interlace_apply(u, offsets, weights, cfg, direct);
  const BasicTensor<T> conv = dense_tconv(u, to_dense(build_equiv_kernel(offsets, weights, cfg), cfg));

  EquivReport rep;
  rep.tol = tol;
  rep.group_max_diff.assign(cfg.groups, 0.0);
  const std::size_t plane = u.extent(2) * u.extent(3);
  for (const ChannelRange& r : partition_channels(cfg)) {
    double m = 0.0;
    for (std::size_t t = 0; t < cfg.frames; ++t)
      for (std::size_t i = (t * cfg.channels + r.begin) * plane; i < (t * cfg.channels + r.end) * plane; ++i)
        m = std::max(m, static_cast<double>(std::abs(direct[i] - conv[i])));
    if (r.group) rep.group_max_diff[*r.group] = m;
    else rep.unshifted_max_diff = m;
    rep.max_abs_diff = std::max(rep.max_abs_diff, m);
  }
  rep.passed = rep.max_abs_diff < tol;
  return rep;
}

/// Offset families exercised by the randomized equivalence sweep.
enum class OffsetKind { fractional, integer, boundary };

inline const char* to_string(OffsetKind k) {
  switch (k) {
    case OffsetKind::fractional: return "fractional";
    case OffsetKind::integer: return "integer";
    case OffsetKind::boundary: return "boundary";
  }
  return "?";
}

struct EquivSweepReport {
  std::size_t trials = 0;
  std::size_t failures = 0;
  double tol = 1e-9;
  double max_abs_diff = 0.0;
  std::map<std::string, double> max_diff_by_kind;
  std::map<std::size_t, double> max_diff_by_frames;
  std::vector<double> group_max_diff;  ///< by group index, over all trials
  double integer_max_diff = 0.0;
  bool passed() const { return failures == 0; }
};

/// One random trial: T cycles through {4, 8, 16}, offsets drawn per kind.
inline EquivReport equivalence_trial(std::size_t trial, Rng& rng, double tol, OffsetKind& kind_out,
                                     std::size_t& frames_out) {
  static constexpr std::size_t kFrames[] = {4, 8, 16};
  const std::size_t frames = kFrames[trial % 3];
  const auto kind = static_cast<OffsetKind>((trial / 3) % 3);
  InterlaceConfig cfg;
  cfg.frames = frames;
  cfg.groups = 4;
  cfg.channels = 16 * (1 + rng.below(2));
  cfg.shift_fraction = 0.25;
  cfg.mirror = rng.below(2) == 0;
  cfg.weight_all_channels = rng.below(4) == 0;
  const std::size_t h = 1 + rng.below(4);
  const std::size_t w = 1 + rng.below(4);
  const double half = static_cast<double>(frames) / 2.0;

  OffsetVector offsets = OffsetVector::zeros(cfg.groups);
  const std::size_t free = cfg.learned_groups();
  for (std::size_t g = 0; g < free; ++g) {
    double o = 0.0;
    switch (kind) {
      case OffsetKind::fractional: o = rng.uniform(-half + 1e-6, half - 1e-6); break;
      case OffsetKind::integer:
        o = static_cast<double>(static_cast<long>(rng.below(frames - 1)) - static_cast<long>(frames / 2 - 1));
        break;
      case OffsetKind::boundary: {
        const double margin = rng.uniform(1e-9, 0.25);
        o = (rng.below(2) ? 1.0 : -1.0) * (half - margin);
        break;
      }
    }
    offsets.values[g] = o;
  }
  if (cfg.mirror)
    for (std::size_t g = 0; g < free; ++g) offsets.values[g + free] = -offsets.values[g];

  WeightMatrix weights{rand_uniform({cfg.weight_rows(), frames}, rng, 0.05, 1.95)};
  const Tensor u = rand_uniform({frames, cfg.channels, h, w}, rng, -1.0, 1.0);
  kind_out = kind;
  frames_out = frames;
  return verify_equivalence(u, offsets, weights, cfg, tol);
}

inline EquivSweepReport run_equivalence_sweep(std::size_t trials, std::uint64_t seed, double tol) {
  EquivSweepReport rep;
  rep.trials = trials;
  rep.tol = tol;
  const Rng root(seed);
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng = root.split(i);
    OffsetKind kind{};
    std::size_t frames = 0;
    const EquivReport r = equivalence_trial(i, rng, tol, kind, frames);
    if (!r.passed) ++rep.failures;
    rep.max_abs_diff = std::max(rep.max_abs_diff, r.max_abs_diff);
    auto& k = rep.max_diff_by_kind[to_string(kind)];
    k = std::max(k, r.max_abs_diff);
    auto& f = rep.max_diff_by_frames[frames];
    f = std::max(f, r.max_abs_diff);
    if (kind == OffsetKind::integer) rep.integer_max_diff = std::max(rep.integer_max_diff, r.max_abs_diff);
    if (rep.group_max_diff.size() < r.group_max_diff.size()) rep.group_max_diff.resize(r.group_max_diff.size(), 0.0);
    for (std::size_t g = 0; g < r.group_max_diff.size(); ++g)
      rep.group_max_diff[g] = std::max(rep.group_max_diff[g], r.group_max_diff[g]);
  }
  return rep;
}

}  // namespace tin
