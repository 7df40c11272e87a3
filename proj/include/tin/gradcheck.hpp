#pragma once

// Central finite-difference checks of the hand-written backward passes.
//
// A problem exposes a scalar loss over a set of tensors that the checker
// perturbs in place, and the analytic gradient of that loss. Operators with
// tensor outputs are reduced to a scalar by a fixed random projection, so
// the analytic gradient is the operator's VJP against that projection.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tin/layers.hpp"
#include "tin/tensor.hpp"
#include "tin/tin_block.hpp"
#include "tin/toy_net.hpp"

namespace tin {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-6;
  double deep_tol = 1e-5;  ///< for end-to-end network checks
  std::size_t samples = 256;
  std::uint64_t seed = 0;
};

/// Values whose non-smooth points the loss passes through: positions that
/// are floored (kinks at integers) and ReLU preactivations (kink at 0).
struct KinkProbe {
  std::vector<double> integer_points;
  std::vector<double> zero_points;
};

struct TensorGradReport {
  std::string name;
  std::size_t numel = 0;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<std::size_t> kink_indices;
};

struct GradReport {
  std::string op;
  double eps = 0.0;
  double tol = 0.0;
  std::vector<TensorGradReport> tensors;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
    return m;
  }
  std::size_t kinks() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.kink_indices.size();
    return n;
  }
  std::size_t checked() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.checked;
    return n;
  }
  bool passed() const { return max_rel_error() < tol && checked() > 0; }
};

struct GradProblem {
  std::string name;
  std::vector<std::pair<std::string, Tensor*>> inputs;
  std::function<long double()> loss;
  std::function<std::vector<Tensor>()> gradient;  ///< same order as inputs
  std::function<KinkProbe()> probe;               ///< optional
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// sum(y * r) accumulated in extended precision.
inline long double project(const Tensor& y, const Tensor& r) {
  y.require_same_shape(r, "project");
  long double s = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += static_cast<long double>(y[i]) * r[i];
  return s;
}

namespace detail {

inline std::vector<double> values_of(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline std::vector<std::size_t> sample_coordinates(std::size_t numel, std::size_t samples, Rng rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (numel <= samples) return idx;
  for (std::size_t i = 0; i < samples; ++i) std::swap(idx[i], idx[i + rng.below(numel - i)]);
  idx.resize(samples);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline bool crosses_kink(const KinkProbe& base, const KinkProbe& plus, const KinkProbe& minus, double eps) {
  for (std::size_t i = 0; i < base.integer_points.size(); ++i) {
    const double b = base.integer_points[i], p = plus.integer_points[i], m = minus.integer_points[i];
    if (p == m) continue;
    const double fb = std::floor(b);
    if (std::floor(p) != fb || std::floor(m) != fb) return true;
    if (std::abs(b - std::round(b)) < std::max(2.0 * eps, std::abs(p - m))) return true;
  }
  for (std::size_t i = 0; i < base.zero_points.size(); ++i) {
    const double b = base.zero_points[i], p = plus.zero_points[i], m = minus.zero_points[i];
    if (p == m) continue;
    if ((p > 0.0) != (b > 0.0) || (m > 0.0) != (b > 0.0)) return true;
    if (std::abs(b) < std::max(2.0 * eps, std::abs(p - m))) return true;
  }
  return false;
}

}  // namespace detail

inline GradReport check(const GradProblem& problem, const GradCheckOptions& opt, double tol) {
  if (!(opt.eps > 0.0) || !std::isfinite(opt.eps)) throw ConfigError("gradcheck: eps must be positive");
  GradReport rep{problem.name, opt.eps, tol, {}};
  const std::vector<Tensor> analytic = problem.gradient();
  if (analytic.size() != problem.inputs.size()) throw ShapeError("gradcheck: gradient count mismatch");
  const KinkProbe base = problem.probe ? problem.probe() : KinkProbe{};
  for (std::size_t k = 0; k < problem.inputs.size(); ++k) {
    auto& [name, x] = problem.inputs[k];
    analytic[k].require_same_shape(*x, "gradcheck");
    analytic[k].ensure_finite("gradcheck analytic gradient");
    TensorGradReport tr{name, x->numel(), 0, 0.0, 0.0, 0, {}};
    for (std::size_t idx : detail::sample_coordinates(x->numel(), opt.samples, Rng(opt.seed).split(k))) {
      const double orig = (*x)[idx];
      const double xp = orig + opt.eps, xm = orig - opt.eps;
      (*x)[idx] = xp;
      const long double lp = problem.loss();
      const KinkProbe pp = problem.probe ? problem.probe() : KinkProbe{};
      (*x)[idx] = xm;
      const long double lm = problem.loss();
      const KinkProbe pm = problem.probe ? problem.probe() : KinkProbe{};
      (*x)[idx] = orig;
      if (!std::isfinite(static_cast<double>(lp)) || !std::isfinite(static_cast<double>(lm)))
        throw NonFiniteError("gradcheck: non-finite loss in " + problem.name);
      if (detail::crosses_kink(base, pp, pm, opt.eps)) {
        tr.kink_indices.push_back(idx);
        continue;
      }
      const double numeric = static_cast<double>((lp - lm) / static_cast<long double>(xp - xm));
      const double a = analytic[k][idx];
      const double rel = relative_error(a, numeric);
      ++tr.checked;
      tr.max_abs_error = std::max(tr.max_abs_error, std::abs(a - numeric));
      if (rel > tr.max_rel_error || tr.checked == 1) {
        if (rel >= tr.max_rel_error) tr.worst_index = idx;
        tr.max_rel_error = std::max(tr.max_rel_error, rel);
      }
    }
    rep.tensors.push_back(std::move(tr));
  }
  return rep;
}

inline GradReport check(const GradProblem& problem, const GradCheckOptions& opt) {
  return check(problem, opt, opt.tol);
}

// ---------------------------------------------------------------------------
// Operator problems. Each owns its tensors; keep the returned object alive
// while checking it.

struct OwnedProblem {
  std::vector<Tensor> store;  // reserved up front so pointers stay valid
  GradProblem problem;
  bool deep = false;
};

namespace detail {

/// Offsets uniform in (-limit, limit) but at least `margin` from integers.
inline Tensor fractional_offsets(std::size_t n, double limit, double margin, Rng& rng) {
  Tensor o({n});
  for (std::size_t i = 0; i < n; ++i) {
    double v;
    do v = rng.uniform(-limit, limit);
    while (std::abs(v - std::round(v)) < margin);
    o[i] = v;
  }
  return o;
}

inline void randomize(OffsetNetParams& p, Rng& rng) {
  p.for_each([&](const char*, Tensor& t) { t = rand_uniform(t.shape(), rng, -0.5, 0.5); });
}
inline void randomize(WeightNetParams& p, Rng& rng) {
  p.for_each([&](const char*, Tensor& t) { t = rand_uniform(t.shape(), rng, -0.3, 0.3); });
}

inline OffsetVector mirrored(const Tensor& learned, const InterlaceConfig& cfg) {
  OffsetVector o = OffsetVector::zeros(cfg.groups);
  const std::size_t free = cfg.learned_groups();
  for (std::size_t g = 0; g < free; ++g) {
    o.values[g] = learned[g];
    if (cfg.mirror) o.values[g + free] = -learned[g];
  }
  return o;
}

inline Tensor mirrored_backward(const Tensor& grad_offsets, const InterlaceConfig& cfg) {
  const std::size_t free = cfg.learned_groups();
  Tensor g({free});
  for (std::size_t i = 0; i < free; ++i) g[i] = grad_offsets[i] - (cfg.mirror ? grad_offsets[i + free] : 0.0);
  return g;
}

}  // namespace detail

inline OwnedProblem temporal_sample_problem(Rng& rng, double offset = 1.3) {
  OwnedProblem op;
  op.store.reserve(3);
  Tensor& u = op.store.emplace_back(rand_normal({6, 3, 2, 2}, rng));
  Tensor& o = op.store.emplace_back(Tensor::full({1}, offset));
  Tensor& r = op.store.emplace_back(rand_normal(u.shape(), rng));
  op.problem.name = "temporal_sample";
  op.problem.inputs = {{"input", &u}, {"offset", &o}};
  op.problem.loss = [&u, &o, &r] { return project(temporal_sample(u, o[0]), r); };
  op.problem.gradient = [&u, &o, &r] {
    auto g = temporal_sample_backward(u, o[0], r);
    return std::vector<Tensor>{std::move(g.input), Tensor::full({1}, g.offset)};
  };
  op.problem.probe = [&o] { return KinkProbe{{o[0]}, {}}; };
  return op;
}

/// Interlace with the mirrored half of the offsets derived from the learned
/// half, so the checked offset gradient includes the mirroring chain rule.
inline OwnedProblem interlace_problem(Rng& rng, InterlaceConfig cfg, bool integer_offsets = false,
                                      std::string name = "interlace") {
  cfg.validate();
  OwnedProblem op;
  op.store.reserve(4);
  Tensor& u = op.store.emplace_back(rand_normal({cfg.frames, cfg.channels, 2, 3}, rng));
  const double limit = static_cast<double>(cfg.frames) / 2.0 - 0.05;
  Tensor learned = detail::fractional_offsets(cfg.learned_groups(), limit, 0.05, rng);
  if (integer_offsets)
    for (double& v : learned.data()) v = std::clamp(std::round(v), -limit + 0.05, limit - 0.05);
  Tensor& o = op.store.emplace_back(std::move(learned));
  Tensor& w = op.store.emplace_back(rand_uniform({cfg.weight_rows(), cfg.frames}, rng, 0.5, 1.5));
  Tensor& r = op.store.emplace_back(rand_normal(u.shape(), rng));
  op.problem.name = std::move(name);
  op.problem.inputs = {{"input", &u}, {"offsets", &o}, {"weights", &w}};
  op.problem.loss = [&u, &o, &w, &r, cfg] {
    Tensor v;
    interlace_apply(u, detail::mirrored(o, cfg), WeightMatrix{w}, cfg, v);
    return project(v, r);
  };
  op.problem.gradient = [&u, &o, &w, &r, cfg] {
    auto [v, tape] = interlace_forward(u, detail::mirrored(o, cfg), WeightMatrix{w}, cfg);
    InterlaceGrads<double> g = interlace_backward(r, std::move(tape));
    return std::vector<Tensor>{std::move(g.input), detail::mirrored_backward(g.offsets, cfg), std::move(g.weights)};
  };
  op.problem.probe = [&o] { return KinkProbe{detail::values_of(o), {}}; };
  return op;
}

inline OwnedProblem pooling_problem(Rng& rng) {
  OwnedProblem op;
  op.store.reserve(2);
  Tensor& u = op.store.emplace_back(rand_normal({5, 4, 3, 2}, rng));
  Tensor& r = op.store.emplace_back(rand_normal({4, 5}, rng));
  op.problem.name = "pooling";
  op.problem.inputs = {{"input", &u}};
  op.problem.loss = [&u, &r] { return project(pool_descriptor(u), r); };
  op.problem.gradient = [&u, &r] { return std::vector<Tensor>{pool_descriptor_backward(r, u.shape())}; };
  return op;
}

inline OwnedProblem conv1d_problem(Rng& rng) {
  OwnedProblem op;
  op.store.reserve(4);
  Tensor& x = op.store.emplace_back(rand_normal({4, 7}, rng));
  Tensor& w = op.store.emplace_back(rand_normal({3, 4, 3}, rng));
  Tensor& b = op.store.emplace_back(rand_normal({3}, rng));
  Tensor& r = op.store.emplace_back(rand_normal({3, 7}, rng));
  op.problem.name = "conv1d";
  op.problem.inputs = {{"input", &x}, {"weight", &w}, {"bias", &b}};
  op.problem.loss = [&x, &w, &b, &r] { return project(conv1d_same(x, w, b), r); };
  op.problem.gradient = [&x, &w, &r] {
    Conv1dGrads g = conv1d_same_backward(x, w, r);
    return std::vector<Tensor>{std::move(g.input), std::move(g.weight), std::move(g.bias)};
  };
  return op;
}

inline OwnedProblem fc_problem(Rng& rng) {
  OwnedProblem op;
  op.store.reserve(4);
  Tensor& x = op.store.emplace_back(rand_normal({6}, rng));
  Tensor& w = op.store.emplace_back(rand_normal({4, 6}, rng));
  Tensor& b = op.store.emplace_back(rand_normal({4}, rng));
  Tensor& r = op.store.emplace_back(rand_normal({4}, rng));
  op.problem.name = "fc";
  op.problem.inputs = {{"input", &x}, {"weight", &w}, {"bias", &b}};
  op.problem.loss = [&x, &w, &b, &r] { return project(fc_forward(x, w, b), r); };
  op.problem.gradient = [&x, &w, &r] {
    FcGrads g = fc_backward(x, w, r);
    return std::vector<Tensor>{std::move(g.input), std::move(g.weight), std::move(g.bias)};
  };
  return op;
}

inline OwnedProblem sigmoid_problem(Rng& rng) {
  OwnedProblem op;
  op.store.reserve(2);
  Tensor& x = op.store.emplace_back(rand_uniform({32}, rng, -3.5, 3.5));
  Tensor& r = op.store.emplace_back(rand_normal({32}, rng));
  op.problem.name = "sigmoid";
  op.problem.inputs = {{"input", &x}};
  op.problem.loss = [&x, &r] { return project(sigmoid_forward(x), r); };
  op.problem.gradient = [&x, &r] { return std::vector<Tensor>{sigmoid_backward(sigmoid_forward(x), r)}; };
  return op;
}

inline OwnedProblem relu_problem(Rng& rng) {
  OwnedProblem op;
  op.store.reserve(2);
  Tensor& x = op.store.emplace_back(rand_normal({64}, rng));
  Tensor& r = op.store.emplace_back(rand_normal({64}, rng));
  op.problem.name = "relu";
  op.problem.inputs = {{"input", &x}};
  op.problem.loss = [&x, &r] { return project(relu_forward(x), r); };
  op.problem.gradient = [&x, &r] { return std::vector<Tensor>{relu_backward(x, r)}; };
  op.problem.probe = [&x] { return KinkProbe{{}, detail::values_of(x)}; };
  return op;
}

inline OwnedProblem rescale_problem(Rng& rng, std::size_t frames = 8, std::size_t groups = 4, bool mirror = true) {
  OwnedProblem op;
  op.store.reserve(2);
  Tensor& raw = op.store.emplace_back(rand_uniform({groups}, rng, 0.1, 0.9));
  Tensor& r = op.store.emplace_back(rand_normal({groups}, rng));
  op.problem.name = "rescale";
  op.problem.inputs = {{"raw", &raw}};
  op.problem.loss = [&raw, &r, frames, mirror] { return project(rescale_offsets(raw, frames, mirror).values, r); };
  op.problem.gradient = [&r, frames, mirror] {
    return std::vector<Tensor>{rescale_offsets_backward(r, frames, mirror)};
  };
  return op;
}

inline OwnedProblem offsetnet_problem(Rng& rng) {
  InterlaceConfig cfg;
  cfg.frames = 6;
  cfg.channels = 8;
  cfg.groups = 2;
  OwnedProblem op;
  op.store.reserve(8);
  OffsetNetParams p = OffsetNetParams::init(cfg, rng);
  detail::randomize(p, rng);
  Tensor& z = op.store.emplace_back(rand_normal({cfg.channels, cfg.frames}, rng));
  Tensor& r = op.store.emplace_back(rand_normal({cfg.groups}, rng));
  std::vector<Tensor*> ptrs;
  op.problem.inputs.push_back({"z", &z});
  p.for_each([&](const char* n, Tensor& t) {
    ptrs.push_back(&op.store.emplace_back(t));
    op.problem.inputs.push_back({n, ptrs.back()});
  });
  auto params = [ptrs] {
    OffsetNetParams q;
    std::size_t i = 0;
    q.for_each([&](const char*, Tensor& t) { t = *ptrs[i++]; });
    return q;
  };
  op.problem.name = "offsetnet";
  op.problem.loss = [&z, &r, params] { return project(offsetnet_forward(z, params()).first, r); };
  op.problem.gradient = [&z, &r, params, cfg] {
    const OffsetNetParams q = params();
    auto [raw, tape] = offsetnet_forward(z, q);
    // Route the projection through nets_backward: grad_raw = r means
    // grad_offsets = r / T on the unmirrored path.
    InterlaceConfig plain = cfg;
    plain.mirror = false;
    const Tensor grad_offsets = r * (1.0 / static_cast<double>(cfg.frames));
    WeightNetParams wzero = WeightNetParams::init(plain, WeightNetInput::descriptor);
    auto [w, wtape] = weightnet_forward(z, wzero);
    NetsGrads g = nets_backward(grad_offsets, Tensor(w.values.shape()), tape, wtape, q, wzero, plain,
                                WeightNetInput::descriptor);
    std::vector<Tensor> out{std::move(g.z)};
    g.offset_net.for_each([&](const char*, Tensor& t) { out.push_back(std::move(t)); });
    return out;
  };
  op.problem.probe = [&z, params] {
    auto [raw, tape] = offsetnet_forward(z, params());
    return KinkProbe{{}, detail::values_of(tape.hidden_pre)};
  };
  return op;
}

inline OwnedProblem weightnet_problem(Rng& rng, WeightNetInput input = WeightNetInput::descriptor) {
  InterlaceConfig cfg;
  cfg.frames = 6;
  cfg.channels = 8;
  cfg.groups = 2;
  OwnedProblem op;
  op.store.reserve(4);
  const std::size_t cin = input == WeightNetInput::descriptor ? cfg.channels : 1;
  Tensor& x = op.store.emplace_back(rand_normal({cin, cfg.frames}, rng));
  Tensor& w = op.store.emplace_back(rand_uniform({cfg.weight_rows(), cin, 3}, rng, -0.4, 0.4));
  Tensor& b = op.store.emplace_back(rand_uniform({cfg.weight_rows()}, rng, -0.4, 0.4));
  Tensor& r = op.store.emplace_back(rand_normal({cfg.weight_rows(), cfg.frames}, rng));
  op.problem.name = "weightnet";
  op.problem.inputs = {{"input", &x}, {"conv_weight", &w}, {"conv_bias", &b}};
  op.problem.loss = [&x, &w, &b, &r] { return project(weightnet_forward(x, WeightNetParams{w, b}).first.values, r); };
  op.problem.gradient = [&x, &w, &b, &r] {
    auto [e, tape] = weightnet_forward(x, WeightNetParams{w, b});
    Conv1dGrads g = conv1d_same_backward(x, w, sigmoid_backward(tape.gate, r * 2.0));
    return std::vector<Tensor>{std::move(g.input), std::move(g.weight), std::move(g.bias)};
  };
  return op;
}

/// Whole TIN block with randomized (non-identity) parameters.
inline OwnedProblem tin_block_problem(Rng& rng, WeightNetInput input = WeightNetInput::descriptor,
                                      bool weight_all_channels = false, std::string name = "tin_block") {
  InterlaceConfig cfg;
  cfg.frames = 6;
  cfg.channels = 8;
  cfg.groups = 2;
  cfg.shift_fraction = 0.5;
  cfg.weight_all_channels = weight_all_channels;
  TinBlock block = TinBlock::create(cfg, rng, input);
  detail::randomize(block.offset_net, rng);
  detail::randomize(block.weight_net, rng);
  OwnedProblem op;
  op.store.reserve(12);
  Tensor& u = op.store.emplace_back(rand_normal({cfg.frames, cfg.channels, 2, 2}, rng));
  Tensor& r = op.store.emplace_back(rand_normal(u.shape(), rng));
  std::vector<Tensor*> ptrs;
  op.problem.inputs.push_back({"input", &u});
  block.for_each_param([&](const std::string& n, Tensor& t) {
    ptrs.push_back(&op.store.emplace_back(t));
    op.problem.inputs.push_back({n, ptrs.back()});
  });
  auto current = [ptrs, block] {
    TinBlock b = block;
    std::size_t i = 0;
    b.for_each_param([&](const std::string&, Tensor& t) { t = *ptrs[i++]; });
    return b;
  };
  op.problem.name = std::move(name);
  op.problem.loss = [&u, &r, current] { return project(tin_forward(current(), u).first, r); };
  op.problem.gradient = [&u, &r, current] {
    const TinBlock b = current();
    auto [v, tape] = tin_forward(b, u);
    TinGrads g = tin_backward(b, r, std::move(tape));
    std::vector<Tensor> out{std::move(g.input)};
    g.offset_net.for_each([&](const char*, Tensor& t) { out.push_back(std::move(t)); });
    g.weight_net.for_each([&](const char*, Tensor& t) { out.push_back(std::move(t)); });
    return out;
  };
  op.problem.probe = [&u, current] {
    OffsetTape ot;
    auto [offsets, weights] = tin_parameters(current(), u, &ot);
    return KinkProbe{detail::values_of(offsets.values), detail::values_of(ot.hidden_pre)};
  };
  return op;
}

inline OwnedProblem conv2d_problem(Rng& rng, std::size_t stride) {
  OwnedProblem op;
  op.store.reserve(4);
  Tensor& x = op.store.emplace_back(rand_normal({2, 3, 5, 6}, rng));
  Tensor& w = op.store.emplace_back(rand_normal({4, 3, 3, 3}, rng));
  Tensor& b = op.store.emplace_back(rand_normal({4}, rng));
  Tensor& r = op.store.emplace_back(rand_normal(conv2d_forward(x, w, b, stride).shape(), rng));
  op.problem.name = stride == 1 ? "conv2d" : "conv2d_stride" + std::to_string(stride);
  op.problem.inputs = {{"input", &x}, {"weight", &w}, {"bias", &b}};
  op.problem.loss = [&x, &w, &b, &r, stride] { return project(conv2d_forward(x, w, b, stride), r); };
  op.problem.gradient = [&x, &w, &r, stride] {
    auto g = conv2d_backward(x, w, r, stride);
    return std::vector<Tensor>{std::move(g.input), std::move(g.weight), std::move(g.bias)};
  };
  return op;
}

inline OwnedProblem temporal_conv_problem(Rng& rng) {
  OwnedProblem op;
  op.store.reserve(3);
  Tensor& x = op.store.emplace_back(rand_normal({5, 3, 2, 2}, rng));
  Tensor& k = op.store.emplace_back(rand_normal({3, 3}, rng));
  Tensor& r = op.store.emplace_back(rand_normal(x.shape(), rng));
  op.problem.name = "temporal_conv3";
  op.problem.inputs = {{"input", &x}, {"kernel", &k}};
  op.problem.loss = [&x, &k, &r] { return project(temporal_conv3_forward(x, k), r); };
  op.problem.gradient = [&x, &k, &r] {
    auto g = temporal_conv3_backward(x, k, r);
    return std::vector<Tensor>{std::move(g.input), std::move(g.kernel)};
  };
  return op;
}

inline OwnedProblem cross_entropy_problem(Rng& rng) {
  OwnedProblem op;
  op.store.reserve(1);
  Tensor& z = op.store.emplace_back(rand_normal({5}, rng));
  op.problem.name = "softmax_cross_entropy";
  op.problem.inputs = {{"logits", &z}};
  op.problem.loss = [&z] { return static_cast<long double>(softmax_cross_entropy(z, 2).loss); };
  op.problem.gradient = [&z] { return std::vector<Tensor>{softmax_cross_entropy(z, 2).grad_logits}; };
  return op;
}

/// Cross-entropy of a small toy net with TIN, checked against the input
/// clip and every parameter.
inline OwnedProblem toy_net_problem(Rng& rng, TemporalMode mode = TemporalMode::tin) {
  ToyNetSpec spec;
  spec.frames = 4;
  spec.height = 6;
  spec.width = 6;
  spec.channels = 8;
  spec.classes = 3;
  spec.temporal = mode;
  spec.groups = 2;
  ToyNet net = ToyNet::build(spec, rng);
  for (auto& l : net.layers) {
    if (auto* t = std::get_if<TinLayer>(&l)) {
      detail::randomize(t->block.offset_net, rng);
      detail::randomize(t->block.weight_net, rng);
    } else if (auto* c = std::get_if<TemporalConvLayer>(&l)) {
      c->kernel = rand_uniform(c->kernel.shape(), rng, -0.5, 1.0);
    } else if (auto* c2 = std::get_if<Conv2dLayer>(&l)) {
      c2->bias = rand_uniform(c2->bias.shape(), rng, -0.1, 0.1);
    }
  }
  OwnedProblem op;
  op.deep = true;
  auto params = net.params();
  op.store.reserve(params.size() + 1);
  Tensor& clip = op.store.emplace_back(rand_normal({spec.frames, 1, spec.height, spec.width}, rng));
  std::vector<Tensor*> ptrs;
  op.problem.inputs.push_back({"input", &clip});
  for (auto& p : params) {
    ptrs.push_back(&op.store.emplace_back(*p.value));
    op.problem.inputs.push_back({p.name, ptrs.back()});
  }
  auto current = [ptrs, net] {
    ToyNet n = net;
    std::size_t i = 0;
    for (auto& p : n.params()) *p.value = *ptrs[i++];
    return n;
  };
  const std::size_t label = 1;
  op.problem.name = mode == TemporalMode::tin ? "toy_net" : "toy_net_" + std::string(to_string(mode));
  op.problem.loss = [&clip, current, label] {
    return static_cast<long double>(softmax_cross_entropy(current().forward(clip), label).loss);
  };
  op.problem.gradient = [&clip, current, label] {
    ToyNet n = current();
    auto tr = n.forward_trace(clip);
    CrossEntropy ce = softmax_cross_entropy(tr.logits, label);
    Tensor grad_input;
    std::vector<Tensor> g = n.backward(std::move(tr), ce.grad_logits, &grad_input);
    g.insert(g.begin(), std::move(grad_input));
    return g;
  };
  op.problem.probe = [&clip, current] {
    ToyNet n = current();
    auto tr = n.forward_trace(clip);
    KinkProbe k;
    for (std::size_t i = 0; i < n.layers.size(); ++i) {
      if (std::holds_alternative<ReluLayer>(n.layers[i]))
        k.zero_points.insert(k.zero_points.end(), tr.inputs[i].data().begin(), tr.inputs[i].data().end());
      if (tr.tin[i]) {
        const TinTape& t = *tr.tin[i];
        k.integer_points.insert(k.integer_points.end(), t.offsets.values.data().begin(), t.offsets.values.data().end());
        k.zero_points.insert(k.zero_points.end(), t.offset_tape.hidden_pre.data().begin(),
                             t.offset_tape.hidden_pre.data().end());
      }
    }
    return k;
  };
  return op;
}

/// Every operator problem, in a fixed order, each seeded from opt.seed.
inline std::vector<GradReport> run_gradcheck_suite(const GradCheckOptions& opt) {
  std::vector<GradReport> out;
  std::uint64_t stream = 0;
  auto run = [&](auto make) {
    Rng rng = Rng(opt.seed).split(++stream);
    OwnedProblem op = make(rng);
    out.push_back(check(op.problem, opt, op.deep ? opt.deep_tol : opt.tol));
  };
  InterlaceConfig icfg;
  icfg.frames = 8;
  icfg.channels = 16;
  icfg.groups = 4;
  InterlaceConfig iall = icfg;
  iall.mirror = false;
  iall.weight_all_channels = true;
  run([](Rng& r) { return temporal_sample_problem(r); });
  run([&](Rng& r) { return interlace_problem(r, icfg); });
  run([&](Rng& r) { return interlace_problem(r, iall, false, "interlace_all_channels"); });
  run([&](Rng& r) { return interlace_problem(r, icfg, true, "interlace_integer_offsets"); });
  run([](Rng& r) { return pooling_problem(r); });
  run([](Rng& r) { return conv1d_problem(r); });
  run([](Rng& r) { return fc_problem(r); });
  run([](Rng& r) { return sigmoid_problem(r); });
  run([](Rng& r) { return relu_problem(r); });
  run([](Rng& r) { return rescale_problem(r); });
  run([](Rng& r) { return offsetnet_problem(r); });
  run([](Rng& r) { return weightnet_problem(r); });
  run([](Rng& r) { return tin_block_problem(r); });
  run([](Rng& r) { return tin_block_problem(r, WeightNetInput::pooled, true, "tin_block_pooled_all_channels"); });
  run([](Rng& r) { return conv2d_problem(r, 1); });
  run([](Rng& r) { return conv2d_problem(r, 2); });
  run([](Rng& r) { return temporal_conv_problem(r); });
  run([](Rng& r) { return cross_entropy_problem(r); });
  run([](Rng& r) { return toy_net_problem(r); });
  run([](Rng& r) { return toy_net_problem(r, TemporalMode::tcn); });
  return out;
}

}  // namespace tin
