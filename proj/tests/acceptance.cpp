// Acceptance checks. One PASS/FAIL line per criterion, details indented
// below it. Exit status is the number of failed criteria (capped at 1).
//
//   tin_acceptance [NAME...]   run only criteria whose name contains NAME

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tin/tin.hpp"

using namespace tin;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string list(const std::vector<double>& xs, const char* f = "%.4f") {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + fmt(f, xs[i]);
  return s + "]";
}

double mean(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

/// Full-size run used by the temporal-modelling, parity and trajectory checks.
struct Run {
  RunRecord record;
  double seconds = 0.0;
};

Experiment full_experiment(TaskKind task, TemporalMode mode) {
  Experiment ex;  // T=8, 16x16, 2000/500 clips, 30 epochs
  ex.task.kind = task;
  ex.net.temporal = mode;
  return ex;
}

class RunCache {
 public:
  const Run& get(TaskKind task, TemporalMode mode, std::uint64_t seed) {
    const std::string key = std::string(to_string(task)) + "/" + to_string(mode) + "/" + std::to_string(seed);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    const auto t0 = Clock::now();
    Run r;
    r.record = run_experiment(full_experiment(task, mode), seed).record;
    r.seconds = seconds_since(t0);
    std::cerr << "  [run] " << key << "  val_acc " << r.record.final_val_acc() << "  " << fmt("%.1f", r.seconds)
              << " s\n";
    return runs_.emplace(key, std::move(r)).first->second;
  }

 private:
  std::map<std::string, Run> runs_;
};

RunCache g_runs;

Outcome equivalence() {
  const auto t0 = Clock::now();
  const EquivSweepReport rep = run_equivalence_sweep(1000, 1, 1e-9);
  const double secs = seconds_since(t0);
  Outcome o;
  const bool frames_ok = rep.max_diff_by_frames.size() == 3;
  const bool kinds_ok = rep.max_diff_by_kind.size() == 3;
  o.pass = rep.passed() && rep.trials >= 1000 && rep.max_abs_diff < 1e-9 && secs < 60.0 && frames_ok && kinds_ok;
  o.summary = std::to_string(rep.trials) + " trials, max |diff| " + fmt("%.3e", rep.max_abs_diff) + " (< 1e-9), " +
              fmt("%.2f", secs) + " s (< 60 s)";
  for (const auto& [t, d] : rep.max_diff_by_frames) o.details.push_back("T=" + std::to_string(t) + "  max " + fmt("%.3e", d));
  for (const auto& [k, d] : rep.max_diff_by_kind) o.details.push_back(k + " offsets  max " + fmt("%.3e", d));
  return o;
}

Outcome gradients() {
  const GradCheckOptions opt;  // eps 1e-5, tol 1e-6, deep 1e-5
  const auto t0 = Clock::now();
  const std::vector<GradReport> reps = run_gradcheck_suite(opt);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = secs < 120.0;
  std::size_t kinks = 0;
  for (const GradReport& r : reps) {
    o.pass = o.pass && r.passed();
    kinks += r.kinks();
    o.details.push_back((r.passed() ? "ok   " : "FAIL ") + r.op + "  max rel " + fmt("%.2e", r.max_rel_error()) +
                        " (tol " + fmt("%.0e", r.tol) + ")  checked " + std::to_string(r.checked()) + "  kinks " +
                        std::to_string(r.kinks()));
  }
  const std::vector<std::string> required{"temporal_sample", "interlace", "pooling", "conv1d", "fc",
                                          "sigmoid", "rescale", "tin_block", "toy_net"};
  for (const auto& name : required) {
    const bool found = std::any_of(reps.begin(), reps.end(), [&](const GradReport& r) { return r.op == name; });
    if (!found) {
      o.pass = false;
      o.details.push_back("missing op " + name);
    }
  }
  o.summary = std::to_string(reps.size()) + " ops, " + std::to_string(kinks) + " kink coordinates excluded, " +
              fmt("%.1f", secs) + " s (< 120 s)";
  return o;
}

Outcome identity() {
  Outcome o;
  double block_max = 0.0, logits_max = 0.0;
  Rng rng(11);
  for (bool all : {false, true})
    for (bool mirror : {true, false})
      for (auto input : {WeightNetInput::descriptor, WeightNetInput::pooled}) {
        InterlaceConfig cfg;
        cfg.frames = 8;
        cfg.channels = 32;
        cfg.groups = 4;
        cfg.mirror = mirror;
        cfg.weight_all_channels = all;
        const TinBlock block = TinBlock::create(cfg, rng, input);
        const Tensor u = rand_normal({8, 32, 7, 7}, rng, 5.0);
        block_max = std::max(block_max, max_abs_diff(tin_forward(block, u).first, u));
      }
  SynthTask task;
  task.seed = 4;
  const Dataset ds = generate_task(task, Split::val, 20);
  for (TemporalMode mode : {TemporalMode::tin, TemporalMode::tcn}) {
    ToyNetSpec spec;
    spec.temporal = mode;
    const ToyNet net = ToyNet::build(spec, rng);
    const ToyNet plain = net.without_temporal();
    for (const Tensor& clip : ds.clips) logits_max = std::max(logits_max, max_abs_diff(net.forward(clip), plain.forward(clip)));
  }
  o.pass = block_max <= 1e-10 && logits_max <= 1e-10;
  o.summary = "block max |v-u| " + fmt("%.1e", block_max) + ", logits max |diff| " + fmt("%.1e", logits_max) +
              " (<= 1e-10)";
  o.details.push_back("8 block variants (mirror x all-channel attention x WeightNet input), 20 direction2 clips");
  return o;
}

Outcome temporal_modelling() {
  Outcome o;
  std::vector<double> tin_best, tin_final, blind;
  std::vector<double> reach;
  double slowest = 0.0;
  for (std::uint64_t s : kSeeds) {
    const Run& r = g_runs.get(TaskKind::direction2, TemporalMode::tin, s);
    tin_best.push_back(r.record.best_val_acc());
    tin_final.push_back(r.record.final_val_acc());
    reach.push_back(static_cast<double>(r.record.epoch_reaching(0.9)));
    slowest = std::max(slowest, r.seconds);
  }
  for (std::uint64_t s : kSeeds) {
    const Run& r = g_runs.get(TaskKind::direction2, TemporalMode::none, s);
    blind.push_back(r.record.final_val_acc());
    slowest = std::max(slowest, r.seconds);
  }
  const double n_val = 500.0;
  const double sigma = std::sqrt(0.25 / n_val);
  bool tin_ok = true, blind_ok = true, band_ok = true;
  for (double a : tin_best) tin_ok = tin_ok && a >= 0.9;
  for (double a : blind) {
    blind_ok = blind_ok && std::abs(a - 0.5) <= 3.0 * sigma;
    band_ok = band_ok && a >= 0.45 && a <= 0.55;
  }
  o.pass = tin_ok && blind_ok && slowest < 600.0;
  o.summary = "TIN best " + list(tin_best) + " (>= 0.9), disabled " + list(blind) + " (|a-0.5| <= " +
              fmt("%.4f", 3 * sigma) + "), slowest run " + fmt("%.0f", slowest) + " s (< 600 s)";
  o.details.push_back("TIN final " + list(tin_final) + ", first epoch at >= 0.9 " + list(reach, "%.0f"));
  o.details.push_back(std::string("disabled arm inside [0.45, 0.55]: ") + (band_ok ? "yes" : "no"));
  return o;
}

Outcome tcn_parity() {
  Outcome o;
  o.pass = true;
  std::vector<std::string> parts;
  for (TaskKind task : {TaskKind::direction2, TaskKind::direction3}) {
    std::vector<double> tin, tcn;
    for (std::uint64_t s : kSeeds) {
      tin.push_back(g_runs.get(task, TemporalMode::tin, s).record.final_val_acc());
      tcn.push_back(g_runs.get(task, TemporalMode::tcn, s).record.final_val_acc());
    }
    const double gap = std::abs(mean(tin) - mean(tcn));
    o.pass = o.pass && gap <= 0.05;
    parts.push_back(std::string(to_string(task)) + " gap " + fmt("%.1f", 100 * gap) + " pts");
    o.details.push_back(std::string(to_string(task)) + "  TIN " + list(tin) + " mean " + fmt("%.4f", mean(tin)) +
                        "  TCN " + list(tcn) + " mean " + fmt("%.4f", mean(tcn)));
  }
  o.summary = parts[0] + ", " + parts[1] + " (<= 5 pts, seed means)";
  return o;
}

Outcome efficiency() {
  Outcome o;
  OpShape s;
  s.frames = 8;
  s.channels = 256;
  s.height = 14;
  s.width = 14;
  s.groups = 4;
  s.shift_fraction = 0.25;
  const double ratio = count_flops(BenchOp::interlace, s).macs / count_flops(BenchOp::tcn3, s).macs;
  const double module_ratio = count_flops(BenchOp::tin_module, s).macs / count_flops(BenchOp::tcn3, s).macs;
  const LatencyOptions lo{100, 20, 1, false};
  const LatencyReport li = run_latency(BenchOp::interlace, s, Precision::f64, lo);
  const LatencyReport lt = run_latency(BenchOp::tcn3, s, Precision::f64, lo);
  const HostOverhead host = resnet50_tin_overhead(8);
  o.pass = ratio < 0.25 && li.median_us < lt.median_us && host.overhead() < 0.05;
  o.summary = "MACs interlace/tcn3 " + fmt("%.4f", ratio) + " (< 0.25), median " + fmt("%.1f", li.median_us) +
              " us vs " + fmt("%.1f", lt.median_us) + " us, ResNet-50 overhead " +
              fmt("%.3f", 100 * host.overhead()) + "% (< 5%)";
  o.details.push_back("tcn3 / interlace latency " + fmt("%.2f", lt.median_us / li.median_us) + "x (reported only)");
  o.details.push_back("tin_module (interlace plus nets, pooling adds excluded) / tcn3 MACs " + fmt("%.4f", module_ratio));
  o.details.push_back("unfolded interlace / tcn3 MACs " +
                      fmt("%.4f", count_flops(BenchOp::interlace, s).macs_unfolded / count_flops(BenchOp::tcn3, s).macs));
  return o;
}

Outcome ablation() {
  Outcome o;
  const Settings settings;
  const Experiment base = ablation_experiment(settings);
  const auto t0 = Clock::now();
  const std::vector<AblationRow> rows = run_ablation(settings.ablation, base, &std::cerr);
  const double secs = seconds_since(t0);
  std::size_t cells = 0;
  bool complete = true, floor = false;
  for (std::size_t g : {1u, 2u, 4u})
    for (bool m : {true, false}) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const AblationRow& r) {
        return r.tin_enabled && r.learned_groups == g && r.mirror == m;
      });
      if (it != rows.end() && it->accuracies.size() >= 3) ++cells;
      else complete = false;
    }
  for (const AblationRow& r : rows) {
    if (!r.tin_enabled && r.accuracies.size() >= 3) floor = true;
    o.details.push_back(r.label + "  mean " + fmt("%.4f", r.mean()) + "  " + list(r.accuracies));
  }
  o.pass = complete && floor;
  o.summary = std::to_string(cells) + "/6 cells with >= 3 seeds, floor " + (floor ? "present" : "missing") + ", " +
              fmt("%.0f", secs) + " s";
  o.details.push_back("reduced budget: " + std::to_string(base.train_size) + "/" + std::to_string(base.val_size) +
                      " clips, " + std::to_string(base.train.epochs) + " epochs, width " +
                      std::to_string(base.net.channels));
  return o;
}

Outcome trajectory() {
  Outcome o;
  bool start_ok = true, moved = true, stats_ok = true;
  std::vector<double> max_offset;
  for (std::uint64_t s : kSeeds) {
    const RunRecord& rec = g_runs.get(TaskKind::direction2, TemporalMode::tin, s).record;
    if (rec.trajectory.empty()) {
      start_ok = moved = stats_ok = false;
      continue;
    }
    for (const TinSnapshot& snap : rec.trajectory) {
      if (snap.epoch != 0) continue;
      for (double v : snap.offsets) start_ok = start_ok && v == 0.0;
      for (double w : snap.frame_weights) start_ok = start_ok && w == 1.0;
    }
    max_offset.push_back(rec.max_abs_final_offset());
    moved = moved && rec.max_abs_final_offset() > 0.1;
    const auto stats = boundary_weight_stats(rec);
    stats_ok = stats_ok && !stats.empty();
    for (const auto& b : stats) {
      stats_ok = stats_ok && std::isfinite(b.boundary_mean) && std::isfinite(b.center_mean);
      o.details.push_back("seed " + std::to_string(s) + " layer " + std::to_string(b.layer) + "  boundary weight " +
                          fmt("%.4f", b.boundary_mean) + "  centre weight " + fmt("%.4f", b.center_mean));
    }
  }
  o.pass = start_ok && moved && stats_ok;
  o.summary = std::string("epoch 0 exact: ") + (start_ok ? "yes" : "no") + ", final max |O| per seed " +
              list(max_offset) + " (> 0.1), boundary stats " + (stats_ok ? "emitted" : "missing");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"equivalence", equivalence},   {"gradients", gradients},   {"identity_at_init", identity},
      {"temporal_modelling", temporal_modelling}, {"tcn_parity", tcn_parity}, {"efficiency", efficiency},
      {"ablation", ablation},         {"trajectory", trajectory}};
  std::vector<std::string> filters(argv + 1, argv + argc);
  std::size_t failed = 0, ran = 0;
  const auto t0 = Clock::now();
  for (const auto& [name, fn] : criteria) {
    if (!filters.empty() &&
        std::none_of(filters.begin(), filters.end(), [&](const std::string& f) { return name.find(f) != std::string::npos; }))
      continue;
    ++ran;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.summary << "\n";
    for (const auto& d : o.details) std::cout << "     " << d << "\n";
    std::cout.flush();
  }
  std::cout << ran - failed << "/" << ran << " criteria passed in " << fmt("%.0f", seconds_since(t0)) << " s\n";
  return failed == 0 ? 0 : 1;
}
