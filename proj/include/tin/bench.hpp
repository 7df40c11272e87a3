#pragma once

// Analytic multiply-add counts and wall-clock timing of the interlace
// operator against a full-channel 3-tap temporal convolution.
//
// Convention: counts are multiply-adds (MACs); 1 MAC = 2 FLOPs. The sums of
// descriptor pooling are kept apart as plain adds (1 FLOP each).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <type_traits>
#include <vector>

#include "tin/interlace.hpp"
#include "tin/layers.hpp"
#include "tin/tin_block.hpp"

namespace tin {

inline constexpr const char* kFlopsConvention = "counts are multiply-adds (MACs); 1 MAC = 2 FLOPs; pooling sums are plain adds, 1 FLOP each";

enum class BenchOp { interlace, tin_module, tcn3, conv2d, fc };

inline const char* to_string(BenchOp op) {
  switch (op) {
    case BenchOp::interlace: return "interlace";
    case BenchOp::tin_module: return "tin_module";
    case BenchOp::tcn3: return "tcn3";
    case BenchOp::conv2d: return "conv2d";
    case BenchOp::fc: return "fc";
  }
  return "?";
}

inline BenchOp parse_bench_op(const std::string& s) {
  for (BenchOp op : {BenchOp::interlace, BenchOp::tin_module, BenchOp::tcn3, BenchOp::conv2d, BenchOp::fc})
    if (s == to_string(op)) return op;
  throw ConfigError("unsupported op '" + s + "'");
}

/// Shape of one operator invocation. For conv2d, `channels` is the input
/// width and `out_channels`, `kernel`, `stride` describe the filter; H, W are
/// input extents. For fc, channels -> out_channels per frame.
struct OpShape {
  std::size_t frames = 8;
  std::size_t channels = 64;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t groups = 4;
  double shift_fraction = 0.25;
  bool weight_all_channels = false;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
};

struct FlopsReport {
  std::string op;
  double macs = 0.0;           ///< as executed (attention folded into taps)
  double macs_unfolded = 0.0;  ///< blend and attention counted separately
  double adds = 0.0;           ///< plain additions (descriptor pooling), not in macs
  double params = 0.0;
  double flops() const { return 2.0 * macs + adds; }
};

namespace detail {

inline double tin_nets_macs(const OpShape& s, std::size_t rows, std::size_t wn_in) {
  const double t = static_cast<double>(s.frames), c = static_cast<double>(s.channels);
  const double offset_net = 3.0 * c * t + t * t + static_cast<double>(s.groups) * t;
  const double weight_net = 3.0 * static_cast<double>(wn_in) * static_cast<double>(rows) * t;
  return offset_net + weight_net;
}

}  // namespace detail

inline FlopsReport count_flops(BenchOp op, const OpShape& s) {
  const double t = static_cast<double>(s.frames), c = static_cast<double>(s.channels);
  const double hw = static_cast<double>(s.height * s.width);
  FlopsReport r{to_string(op)};
  switch (op) {
    case BenchOp::interlace:
    case BenchOp::tin_module: {
      if (s.groups == 0) return r;
      InterlaceConfig cfg;
      cfg.frames = s.frames;
      cfg.channels = s.channels;
      cfg.groups = s.groups;
      cfg.shift_fraction = s.shift_fraction;
      cfg.mirror = false;
      cfg.weight_all_channels = s.weight_all_channels;
      cfg.validate();
      const double shifted = static_cast<double>(cfg.shifted_channels());
      const double rest = s.weight_all_channels ? t * (c - shifted) * hw : 0.0;
      r.macs = 2.0 * t * shifted * hw + rest;
      r.macs_unfolded = 3.0 * t * shifted * hw + rest;
      if (op == BenchOp::tin_module) {
        const double nets = detail::tin_nets_macs(s, cfg.weight_rows(), s.channels);
        r.macs += nets;
        r.macs_unfolded += nets;
        r.adds = t * c * hw;
        r.params = 3.0 * c + 1.0 + t * t + t + static_cast<double>(s.groups) * (t + 1.0) +
                   static_cast<double>(cfg.weight_rows()) * (3.0 * c + 1.0);
      }
      return r;
    }
    case BenchOp::tcn3:
      r.macs = r.macs_unfolded = 3.0 * t * c * hw;
      r.params = 3.0 * c;
      return r;
    case BenchOp::conv2d: {
      if (s.stride == 0 || s.out_channels == 0) throw ConfigError("conv2d needs out_channels and stride");
      const double pad = static_cast<double>(s.kernel / 2);
      const double ho = std::floor((static_cast<double>(s.height) + 2 * pad - s.kernel) / s.stride) + 1;
      const double wo = std::floor((static_cast<double>(s.width) + 2 * pad - s.kernel) / s.stride) + 1;
      const double k2 = static_cast<double>(s.kernel * s.kernel);
      r.macs = r.macs_unfolded = t * static_cast<double>(s.out_channels) * ho * wo * c * k2;
      r.params = static_cast<double>(s.out_channels) * c * k2;
      return r;
    }
    case BenchOp::fc:
      r.macs = r.macs_unfolded = t * c * static_cast<double>(s.out_channels);
      r.params = c * static_cast<double>(s.out_channels) + static_cast<double>(s.out_channels);
      return r;
  }
  return r;
}

/// A layer of a host network, or a TIN insertion site.
struct HostLayer {
  std::string name;
  BenchOp op;
  OpShape shape;
};

/// ResNet-50 at 224x224 with a TIN module before the first convolution of
/// every bottleneck block.
inline std::vector<HostLayer> resnet50_layers(std::size_t frames, std::vector<HostLayer>* tin_sites = nullptr) {
  std::vector<HostLayer> layers;
  auto conv = [&](std::string name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                  std::size_t hw) {
    OpShape s;
    s.frames = frames;
    s.channels = cin;
    s.out_channels = cout;
    s.kernel = k;
    s.stride = stride;
    s.height = s.width = hw;
    layers.push_back({std::move(name), BenchOp::conv2d, s});
  };
  conv("conv1", 3, 64, 7, 2, 224);
  const std::size_t blocks[4] = {3, 4, 6, 3};
  const std::size_t widths[4] = {64, 128, 256, 512};
  std::size_t cin = 64, hw = 56;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t width = widths[stage], cout = width * 4;
    for (std::size_t b = 0; b < blocks[stage]; ++b) {
      const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
      const std::string prefix = "layer" + std::to_string(stage + 1) + "." + std::to_string(b) + ".";
      if (tin_sites) {
        OpShape s;
        s.frames = frames;
        s.channels = cin;
        s.height = s.width = hw;
        tin_sites->push_back({prefix + "tin", BenchOp::tin_module, s});
      }
      conv(prefix + "conv1", cin, width, 1, 1, hw);
      conv(prefix + "conv2", width, width, 3, stride, hw);
      const std::size_t out_hw = hw / stride;
      conv(prefix + "conv3", width, cout, 1, 1, out_hw);
      if (b == 0) conv(prefix + "downsample", cin, cout, 1, stride, hw);
      cin = cout;
      hw = out_hw;
    }
  }
  OpShape fc;
  fc.frames = frames;
  fc.channels = 2048;
  fc.out_channels = 1000;
  layers.push_back({"fc", BenchOp::fc, fc});
  return layers;
}

struct HostOverhead {
  double host_macs = 0.0;
  double tin_macs = 0.0;
  double overhead() const { return host_macs > 0 ? tin_macs / host_macs : 0.0; }
};

inline HostOverhead resnet50_tin_overhead(std::size_t frames = 8) {
  std::vector<HostLayer> sites;
  HostOverhead h;
  for (const auto& l : resnet50_layers(frames, &sites)) h.host_macs += count_flops(l.op, l.shape).macs;
  for (const auto& s : sites) h.tin_macs += count_flops(s.op, s.shape).macs;
  return h;
}

enum class Precision { f32, f64 };

inline const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ConfigError("precision must be f32 or f64, got '" + s + "'");
}

struct LatencyReport {
  std::string op;
  OpShape shape;
  Precision precision = Precision::f64;
  std::size_t reps = 0;
  std::size_t warmup = 0;
  double median_us = 0.0;
  double p10_us = 0.0;
  double p90_us = 0.0;
};

struct LatencyOptions {
  std::size_t reps = 50;
  std::size_t warmup = 10;
  std::uint64_t seed = 0;
  bool identity = false;  ///< zero offsets and unit attention
};

namespace detail {

/// Nearest-rank percentile of sorted samples.
inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double rank = std::ceil(q * static_cast<double>(sorted.size()));
  const std::size_t i = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(sorted.size()))) - 1;
  return sorted[i];
}

template <class F>
LatencyReport time_it(F&& body, const LatencyOptions& opt) {
  if (opt.reps < 50) throw ConfigError("latency runs need at least 50 repetitions");
  if (opt.warmup < 10) throw ConfigError("latency runs need at least 10 warmup repetitions");
  for (std::size_t i = 0; i < opt.warmup; ++i) body();
  std::vector<double> us;
  us.reserve(opt.reps);
  for (std::size_t i = 0; i < opt.reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  std::sort(us.begin(), us.end());
  LatencyReport r;
  r.reps = opt.reps;
  r.warmup = opt.warmup;
  r.median_us = us.size() % 2 ? us[us.size() / 2] : 0.5 * (us[us.size() / 2 - 1] + us[us.size() / 2]);
  r.p10_us = percentile(us, 0.10);
  r.p90_us = percentile(us, 0.90);
  return r;
}

inline InterlaceConfig bench_config(const OpShape& s) {
  InterlaceConfig cfg;
  cfg.frames = s.frames;
  cfg.channels = s.channels;
  cfg.groups = s.groups;
  cfg.shift_fraction = s.shift_fraction;
  cfg.mirror = s.groups % 2 == 0;
  cfg.weight_all_channels = s.weight_all_channels;
  cfg.validate();
  return cfg;
}

template <std::floating_point T>
LatencyReport latency_typed(BenchOp op, const OpShape& s, const LatencyOptions& opt) {
  Rng rng(opt.seed);
  const Shape shape{s.frames, s.channels, s.height, s.width};
  const BasicTensor<T> u = rand_uniform<T>(shape, rng, -1.0, 1.0);
  BasicTensor<T> out(shape);
  LatencyReport r;
  switch (op) {
    case BenchOp::interlace: {
      const InterlaceConfig cfg = bench_config(s);
      OffsetVector offsets = OffsetVector::zeros(cfg.groups);
      WeightMatrix weights = WeightMatrix::ones(cfg.weight_rows(), cfg.frames);
      if (!opt.identity) {
        const double limit = static_cast<double>(cfg.frames) / 2.0 - 0.01;
        for (std::size_t g = 0; g < cfg.learned_groups(); ++g) {
          offsets.values[g] = rng.uniform(-limit, limit);
          if (cfg.mirror) offsets.values[g + cfg.learned_groups()] = -offsets.values[g];
        }
        weights.values = rand_uniform(weights.values.shape(), rng, 0.2, 1.8);
      }
      r = time_it([&] { interlace_apply(u, offsets, weights, cfg, out); }, opt);
      break;
    }
    case BenchOp::tcn3: {
      const BasicTensor<T> kernel = rand_uniform<T>({s.channels, 3}, rng, -1.0, 1.0);
      r = time_it([&] { temporal_conv3_apply(u, kernel, out); }, opt);
      break;
    }
    case BenchOp::tin_module: {
      if constexpr (!std::is_same_v<T, double>) {
        throw ConfigError("tin_module is timed in f64 only");
      } else {
        TinBlock block = TinBlock::create(bench_config(s), rng);
        r = time_it(
            [&] {
              auto [offsets, weights] = tin_parameters(block, u);
              interlace_apply(u, offsets, weights, block.cfg, out);
            },
            opt);
      }
      break;
    }
    default:
      throw ConfigError(std::string("no latency benchmark for ") + to_string(op));
  }
  r.op = to_string(op);
  r.shape = s;
  r.precision = std::is_same_v<T, float> ? Precision::f32 : Precision::f64;
  return r;
}

}  // namespace detail

inline LatencyReport run_latency(BenchOp op, const OpShape& shape, Precision precision,
                                 const LatencyOptions& opt = {}) {
  return precision == Precision::f32 ? detail::latency_typed<float>(op, shape, opt)
                                     : detail::latency_typed<double>(op, shape, opt);
}

inline std::string latency_csv_header() { return "op,T,C,H,W,groups,precision,reps,warmup,median_us,p10_us,p90_us"; }

inline std::string latency_csv_row(const LatencyReport& r) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  return r.op + "," + std::to_string(r.shape.frames) + "," + std::to_string(r.shape.channels) + "," +
         std::to_string(r.shape.height) + "," + std::to_string(r.shape.width) + "," + std::to_string(r.shape.groups) +
         "," + to_string(r.precision) + "," + std::to_string(r.reps) + "," + std::to_string(r.warmup) + "," +
         num(r.median_us) + "," + num(r.p10_us) + "," + num(r.p90_us);
}

}  // namespace tin
