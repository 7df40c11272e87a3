#pragma once

// Text walkthrough of one interlace call on a tiny clip: input, offsets,
// interpolation taps, equivalent kernel taps and output, per channel.

#include <cstdio>
#include <ostream>
#include <string>

#include "tin/interlace.hpp"
#include "tin/tcn.hpp"

namespace tin {

struct DemoOptions {
  std::size_t frames = 4;
  std::size_t channels = 8;
  std::size_t height = 2;
  std::size_t width = 2;
  std::size_t groups = 2;
  double shift_fraction = 0.25;
  bool mirror = true;
  bool weight_all_channels = false;
  double offset = 0.0;  ///< offset of group 0; other learned groups get offset / 2
  std::uint64_t seed = 1;
};

struct DemoResult {
  Tensor input, output;
  OffsetVector offsets;
  EquivKernel kernel;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%7.3f", v);
  return buf;
}

}  // namespace detail

inline DemoResult run_demo(const DemoOptions& opt, std::ostream& os) {
  InterlaceConfig cfg;
  cfg.frames = opt.frames;
  cfg.channels = opt.channels;
  cfg.groups = opt.groups;
  cfg.shift_fraction = opt.shift_fraction;
  cfg.mirror = opt.mirror;
  cfg.weight_all_channels = opt.weight_all_channels;
  cfg.validate();

  Rng rng(opt.seed);
  Tensor u({cfg.frames, cfg.channels, opt.height, opt.width});
  for (double& v : u.data()) v = std::round(rng.uniform(0.0, 10.0) * 10.0) / 10.0;

  OffsetVector offsets = OffsetVector::zeros(cfg.groups);
  for (std::size_t g = 0; g < cfg.learned_groups(); ++g) {
    offsets.values[g] = g == 0 ? opt.offset : opt.offset / 2.0;
    if (cfg.mirror) offsets.values[g + cfg.learned_groups()] = -offsets.values[g];
  }
  const WeightMatrix weights = WeightMatrix::ones(cfg.weight_rows(), cfg.frames);
  offsets.validate(cfg);

  Tensor v;
  interlace_apply(u, offsets, weights, cfg, v);
  const EquivKernel kernel = build_equiv_kernel(offsets, weights, cfg);

  os << "clip T=" << cfg.frames << " C=" << cfg.channels << " H=" << opt.height << " W=" << opt.width
     << ", " << cfg.groups << " shifted groups of " << cfg.group_width() << " channel(s)"
     << (cfg.mirror ? ", mirrored" : "") << "\n";
  os << "attention weights: all 1\n\n";
  for (const ChannelRange& r : partition_channels(cfg)) {
    if (r.group) {
      const std::size_t g = *r.group;
      const double o = offsets[g];
      const SampleStencil st = SampleStencil::of(o);
      os << "group " << g << "  channels [" << r.begin << ", " << r.end << ")  offset " << detail::num(o) << "\n";
      os << "  interpolation: v[t] = " << detail::num(st.lower_weight(o)) << " * u[t" << std::showpos << st.floor
         << "] + " << std::noshowpos << detail::num(st.upper_weight(o)) << " * u[t" << std::showpos << st.floor + 1
         << "]" << std::noshowpos << "\n";
      os << "  kernel taps:";
      for (const KernelTap& tap : kernel.taps(g, 0))
        os << "  " << std::showpos << tap.position << std::noshowpos << ":" << detail::num(tap.value);
      os << "\n";
    } else {
      os << "un-shifted channels [" << r.begin << ", " << r.end << ")  kernel taps:  +0:"
         << detail::num(kernel.taps(cfg.groups, 0).front().value) << "\n";
    }
    for (std::size_t c = r.begin; c < r.end; ++c) {
      os << "  c=" << c << "  in :";
      for (std::size_t t = 0; t < cfg.frames; ++t) os << " " << detail::num(u(t, c, 0, 0));
      os << "\n        out:";
      for (std::size_t t = 0; t < cfg.frames; ++t) os << " " << detail::num(v(t, c, 0, 0));
      os << "\n";
    }
  }
  os << "\n(values shown at pixel (0, 0); frames outside the clip read as 0)\n";
  return {std::move(u), std::move(v), std::move(offsets), kernel};
}

}  // namespace tin
