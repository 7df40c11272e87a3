#pragma once

// Synthetic clips whose classes differ only in frame order.
//
// direction2: a Gaussian blob crosses the frame left->right (0) or
//             right->left (1). Class 1 is the exact time reversal of a
//             class-0 trajectory.
// direction3: adds class 2, "out and back": the same frames visited in the
//             order x0, x2, x4, ..., x5, x3, x1.
// speed2:     slow (1 px/frame) vs fast (2 px/frame) drift in a random
//             direction.
//
// Every clean frame is normalised to the same pixel mass, so per-frame
// spatial means carry no class information.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tin/tensor.hpp"

namespace tin {

enum class TaskKind { direction2, direction3, speed2 };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::direction2: return "direction2";
    case TaskKind::direction3: return "direction3";
    case TaskKind::speed2: return "speed2";
  }
  return "?";
}

inline TaskKind parse_task(const std::string& s) {
  if (s == "direction2") return TaskKind::direction2;
  if (s == "direction3") return TaskKind::direction3;
  if (s == "speed2") return TaskKind::speed2;
  throw ConfigError("unknown task '" + s + "'");
}

inline std::size_t task_classes(TaskKind k) { return k == TaskKind::direction3 ? 3 : 2; }

struct SynthTask {
  TaskKind kind = TaskKind::direction2;
  std::size_t frames = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise = 0.05;
  double blob_sigma = 1.2;
  double amplitude = 4.0;  ///< peak of an untruncated blob
  std::uint64_t seed = 0;

  std::size_t classes() const { return task_classes(kind); }

  void validate() const {
    if (frames < 2) throw ConfigError("synthetic task needs at least 2 frames");
    if (height < 8 || width < 8) throw ConfigError("synthetic task needs frames of at least 8x8");
    if (noise < 0.0 || !std::isfinite(noise)) throw ConfigError("noise must be a finite non-negative value");
    if (!(blob_sigma > 0.0)) throw ConfigError("blob_sigma must be positive");
    if (kind == TaskKind::speed2 && 2 * (frames - 1) + 6 > width)
      throw ConfigError("speed2 needs width >= 2*(frames-1)+6");
  }
};

enum class Split { train, val };

struct Dataset {
  std::vector<Tensor> clips;  ///< each [T, 1, H, W]
  std::vector<std::size_t> labels;
  std::size_t classes = 2;
  /// max over t of |mean_class_a(frame mean at t) - mean_class_b(...)|
  double frame_mean_gap = 0.0;

  std::size_t size() const { return clips.size(); }

  /// Stacked [N, T, 1, H, W] clips and [N] labels.
  std::pair<Tensor, Tensor> stacked() const {
    if (clips.empty()) return {Tensor(), Tensor()};
    Shape s = clips.front().shape();
    s.insert(s.begin(), clips.size());
    Tensor x(s);
    Tensor y({clips.size()});
    const std::size_t n = clips.front().numel();
    for (std::size_t i = 0; i < clips.size(); ++i) {
      std::copy(clips[i].data().begin(), clips[i].data().end(), x.ptr() + i * n);
      y[i] = static_cast<double>(labels[i]);
    }
    return {std::move(x), std::move(y)};
  }
};

namespace detail {

inline void render_blob(double* frame, std::size_t h, std::size_t w, double cx, double cy, double sigma,
                        double amplitude) {
  double mass = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      frame[y * w + x] = v;
      mass += v;
    }
  // Unit peak-equivalent mass: 2*pi*sigma^2 for an untruncated blob.
  const double target = amplitude * 2.0 * 3.14159265358979323846 * sigma * sigma;
  for (std::size_t i = 0; i < h * w; ++i) frame[i] *= target / mass;
}

}  // namespace detail

/// Horizontal blob positions for one clip of the given class.
inline std::vector<double> task_trajectory(const SynthTask& task, std::size_t label, Rng& rng) {
  const std::size_t frames = task.frames;
  const double w = static_cast<double>(task.width);
  std::vector<double> xs(frames);
  if (task.kind == TaskKind::speed2) {
    const double step = label == 0 ? 1.0 : 2.0;
    const double span = 2.0 * static_cast<double>(frames - 1);
    const double start = rng.uniform(3.0, w - 3.0 - span);
    const bool flip = rng.below(2) == 1;
    for (std::size_t t = 0; t < frames; ++t) {
      const double x = start + step * static_cast<double>(t);
      xs[t] = x;
    }
    if (flip) std::reverse(xs.begin(), xs.end());
    return xs;
  }
  // Left-to-right base trajectory with a jittered start and span.
  const double span = rng.uniform(0.45, 0.6) * w;
  const double start = rng.uniform(2.5, w - 2.5 - span);
  for (std::size_t t = 0; t < frames; ++t)
    xs[t] = start + span * static_cast<double>(t) / static_cast<double>(frames - 1);
  if (label == 1) {
    std::reverse(xs.begin(), xs.end());
  } else if (label == 2) {
    std::vector<double> order;
    for (std::size_t t = 0; t < frames; t += 2) order.push_back(xs[t]);
    for (std::size_t t = frames % 2 == 0 ? frames - 1 : frames - 2; t < frames; t -= 2) order.push_back(xs[t]);
    xs = order;
  }
  return xs;
}

/// Clean clip (no noise) for a trajectory at a fixed vertical position.
inline Tensor render_clip(const SynthTask& task, const std::vector<double>& xs, double cy) {
  Tensor clip({task.frames, 1, task.height, task.width});
  const std::size_t plane = task.height * task.width;
  for (std::size_t t = 0; t < task.frames; ++t)
    detail::render_blob(clip.ptr() + t * plane, task.height, task.width, xs[t], cy, task.blob_sigma,
                        task.amplitude);
  return clip;
}

inline Dataset generate_task(const SynthTask& task, Split split, std::size_t count) {
  task.validate();
  Rng rng = Rng(task.seed).split(split == Split::train ? 1 : 2);
  Dataset ds;
  ds.classes = task.classes();
  const std::size_t k = ds.classes;
  const std::size_t plane = task.height * task.width;
  std::vector<std::vector<long double>> frame_sums(k, std::vector<long double>(task.frames, 0.0L));
  std::vector<std::size_t> class_counts(k, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % k;
    const double cy = rng.uniform(4.0, static_cast<double>(task.height) - 4.0);
    Tensor clip = render_clip(task, task_trajectory(task, label, rng), cy);
    if (task.noise > 0)
      for (double& v : clip.data()) v += task.noise * rng.normal();
    for (std::size_t t = 0; t < task.frames; ++t) {
      long double s = 0;
      for (std::size_t p = 0; p < plane; ++p) s += clip[t * plane + p];
      frame_sums[label][t] += s / plane;
    }
    ++class_counts[label];
    ds.clips.push_back(std::move(clip));
    ds.labels.push_back(label);
  }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      for (std::size_t t = 0; t < task.frames; ++t) {
        if (!class_counts[a] || !class_counts[b]) continue;
        const double gap = static_cast<double>(frame_sums[a][t] / class_counts[a] - frame_sums[b][t] / class_counts[b]);
        ds.frame_mean_gap = std::max(ds.frame_mean_gap, std::abs(gap));
      }
  return ds;
}

/// Tolerance for frame_mean_gap: 4 standard errors of a class mean of
/// per-frame spatial means under pixel noise.
inline double frame_mean_tolerance(const SynthTask& task, std::size_t count) {
  const double per_class = std::max<double>(1.0, static_cast<double>(count / task.classes()));
  const double se = task.noise / std::sqrt(static_cast<double>(task.height * task.width) * per_class);
  return 4.0 * std::sqrt(2.0) * se + 1e-12;
}

}  // namespace tin
