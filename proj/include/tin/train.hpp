#pragma once

// SGD trainer, run records with offset / attention trajectories, and the
// group-count x mirroring ablation grid.

#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "tin/synth.hpp"
#include "tin/toy_net.hpp"

namespace tin {

struct TrainConfig {
  double lr = 0.005;
  std::vector<std::size_t> milestones{15, 25};
  double lr_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;

  double lr_at(std::size_t epoch) const {
    double lr_e = lr;
    for (std::size_t m : milestones)
      if (epoch >= m) lr_e *= lr_factor;
    return lr_e;
  }

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  }
};

struct EpochStats {
  std::size_t epoch = 0;  ///< 0 = before training
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

/// Mean offsets per group and mean attention per frame of one TIN layer,
/// averaged over the validation clips.
struct TinSnapshot {
  std::size_t epoch = 0;
  std::size_t layer = 0;
  std::vector<double> offsets;        ///< [G]
  std::vector<double> frame_weights;  ///< [T], averaged over attention rows
};

struct RunRecord {
  std::vector<EpochStats> epochs;
  std::vector<TinSnapshot> trajectory;

  double final_val_acc() const { return epochs.empty() ? 0.0 : epochs.back().val_acc; }
  double best_val_acc() const {
    double b = 0.0;
    for (const auto& e : epochs) b = std::max(b, e.val_acc);
    return b;
  }
  /// First epoch whose validation accuracy reached `target`, or 0 if none.
  std::size_t epoch_reaching(double target) const {
    for (const auto& e : epochs)
      if (e.epoch > 0 && e.val_acc >= target) return e.epoch;
    return 0;
  }
  double max_abs_final_offset() const {
    double m = 0.0;
    if (trajectory.empty()) return m;
    const std::size_t last = trajectory.back().epoch;
    for (const auto& s : trajectory)
      if (s.epoch == last)
        for (double o : s.offsets) m = std::max(m, std::abs(o));
    return m;
  }
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<TinSnapshot> snapshots;  ///< filled when requested
};

/// Loss and accuracy over `ds`. With `snapshot` the mean offsets and frame
/// attention of every TIN layer are collected in the same pass.
inline EvalResult evaluate(const ToyNet& net, const Dataset& ds, bool snapshot = false, std::size_t epoch = 0) {
  EvalResult r;
  const std::vector<std::size_t> tin_layers = snapshot ? net.tin_layer_indices() : std::vector<std::size_t>{};
  std::vector<std::vector<long double>> osum, wsum;
  for (std::size_t li : tin_layers) {
    const InterlaceConfig& cfg = std::get<TinLayer>(net.layers[li]).block.cfg;
    r.snapshots.push_back({epoch, li, std::vector<double>(cfg.groups, 0.0), std::vector<double>(cfg.frames, 0.0)});
    osum.emplace_back(cfg.groups, 0.0L);
    wsum.emplace_back(cfg.frames, 0.0L);
  }
  if (ds.size() == 0) return r;
  std::size_t correct = 0;
  long double loss = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto tr = net.forward_trace(ds.clips[i], false, !tin_layers.empty());
    CrossEntropy ce = softmax_cross_entropy(tr.logits, ds.labels[i]);
    loss += ce.loss;
    if (ce.predicted == ds.labels[i]) ++correct;
    for (std::size_t k = 0; k < tin_layers.size(); ++k) {
      const TinTape& tape = *tr.tin[tin_layers[k]];
      for (std::size_t g = 0; g < tape.offsets.size(); ++g) osum[k][g] += tape.offsets[g];
      const std::size_t rows = tape.weights.values.extent(0);
      for (std::size_t t = 0; t < wsum[k].size(); ++t) {
        long double acc = 0;
        for (std::size_t row = 0; row < rows; ++row) acc += tape.weights(row, t);
        wsum[k][t] += acc / rows;
      }
    }
  }
  const long double n = ds.size();
  r.loss = static_cast<double>(loss / n);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  for (std::size_t k = 0; k < r.snapshots.size(); ++k) {
    for (std::size_t g = 0; g < osum[k].size(); ++g) r.snapshots[k].offsets[g] = static_cast<double>(osum[k][g] / n);
    for (std::size_t t = 0; t < wsum[k].size(); ++t)
      r.snapshots[k].frame_weights[t] = static_cast<double>(wsum[k][t] / n);
  }
  return r;
}

/// SGD with momentum and coupled weight decay:
///   v <- momentum * v + (g + wd * p);  p <- p - lr * v
inline RunRecord train(ToyNet& net, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                       std::ostream* log = nullptr) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("empty training set");
  RunRecord rec;
  Rng rng = Rng(cfg.seed).split(99);
  std::vector<NamedParam> params = net.params();
  std::vector<Tensor> velocity;
  for (auto& p : params) velocity.emplace_back(p.value->shape());

  auto record_epoch = [&](std::size_t epoch, double lr, double tl, double ta) {
    EvalResult v = evaluate(net, val_set, true, epoch);
    rec.epochs.push_back({epoch, lr, tl, ta, v.loss, v.accuracy});
    for (auto& s : v.snapshots) rec.trajectory.push_back(std::move(s));
    if (log)
      *log << "epoch " << epoch << " lr " << lr << " train_loss " << tl << " train_acc " << ta << " val_loss "
           << v.loss << " val_acc " << v.accuracy << '\n';
  };

  const EvalResult init = evaluate(net, train_set);
  record_epoch(0, 0.0, init.loss, init.accuracy);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch - 1);
    shuffle(std::span<std::size_t>(order), rng);
    long double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      BatchResult br = batch_gradients(net, train_set.clips, train_set.labels, batch);
      if (!std::isfinite(br.loss)) throw NonFiniteError("training diverged at epoch " + std::to_string(epoch));
      loss_sum += br.loss * static_cast<double>(batch.size());
      correct += br.correct;
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].value;
        Tensor& v = velocity[i];
        const Tensor& g = br.grads[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
          v[j] = cfg.momentum * v[j] + (g[j] + cfg.weight_decay * p[j]);
          p[j] -= lr * v[j];
        }
        if (!p.all_finite()) throw NonFiniteError("parameter " + params[i].name + " became non-finite");
      }
    }
    record_epoch(epoch, lr, static_cast<double>(loss_sum / order.size()),
                 static_cast<double>(correct) / static_cast<double>(order.size()));
  }
  return rec;
}

/// CSV rows: epoch,layer,kind,index,value with kind in {offset, weight}.
inline void write_trajectories_csv(std::ostream& os, const RunRecord& rec) {
  os << "epoch,layer,kind,index,value\n";
  os.precision(17);
  for (const auto& s : rec.trajectory) {
    for (std::size_t g = 0; g < s.offsets.size(); ++g)
      os << s.epoch << ',' << s.layer << ",offset," << g << ',' << s.offsets[g] << '\n';
    for (std::size_t t = 0; t < s.frame_weights.size(); ++t)
      os << s.epoch << ',' << s.layer << ",weight," << t << ',' << s.frame_weights[t] << '\n';
  }
}

/// Mean attention of the first and last frame vs the interior frames.
struct BoundaryWeightStats {
  std::size_t layer = 0;
  double boundary_mean = 0.0;
  double center_mean = 0.0;
};

inline std::vector<BoundaryWeightStats> boundary_weight_stats(const RunRecord& rec) {
  std::vector<BoundaryWeightStats> out;
  if (rec.trajectory.empty()) return out;
  const std::size_t last = rec.trajectory.back().epoch;
  for (const auto& s : rec.trajectory) {
    if (s.epoch != last || s.frame_weights.size() < 3) continue;
    const auto& w = s.frame_weights;
    const double centre = std::accumulate(w.begin() + 1, w.end() - 1, 0.0) / static_cast<double>(w.size() - 2);
    out.push_back({s.layer, 0.5 * (w.front() + w.back()), centre});
  }
  return out;
}

struct Experiment {
  SynthTask task;
  ToyNetSpec net;
  TrainConfig train;
  std::size_t train_size = 2000;
  std::size_t val_size = 500;
};

struct ExperimentResult {
  RunRecord record;
  std::size_t params = 0;
};

/// Builds data and network from one seed and trains.
inline ExperimentResult run_experiment(Experiment ex, std::uint64_t seed, std::ostream* log = nullptr) {
  ex.task.seed = seed;
  ex.train.seed = seed;
  ex.net.classes = ex.task.classes();
  ex.net.frames = ex.task.frames;
  ex.net.height = ex.task.height;
  ex.net.width = ex.task.width;
  const Dataset tr = generate_task(ex.task, Split::train, ex.train_size);
  const Dataset va = generate_task(ex.task, Split::val, ex.val_size);
  Rng rng = Rng(seed).split(7);
  ToyNet net = ToyNet::build(ex.net, rng);
  ExperimentResult res;
  res.params = net.param_count();
  res.record = train(net, tr, va, ex.train, log);
  return res;
}

struct AblationRow {
  std::string label;
  bool tin_enabled = true;
  std::size_t learned_groups = 0;
  bool mirror = false;
  std::size_t total_groups = 0;
  double shift_fraction = 0.0;
  std::vector<double> accuracies;  ///< final validation accuracy per seed

  double mean() const {
    return accuracies.empty() ? 0.0 : std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / accuracies.size();
  }
  double min() const { return accuracies.empty() ? 0.0 : *std::min_element(accuracies.begin(), accuracies.end()); }
  double max() const { return accuracies.empty() ? 0.0 : *std::max_element(accuracies.begin(), accuracies.end()); }
};

/// Group counts are learned groups; with mirroring each one gets a reversed
/// twin, so the operator runs with twice as many groups.
struct AblationGrid {
  std::vector<std::size_t> learned_groups{1, 2, 4};
  std::vector<bool> mirror{true, false};
  std::vector<double> shift_fractions{0.25};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  bool include_floor = true;
};

inline std::vector<AblationRow> run_ablation(const AblationGrid& grid, const Experiment& base,
                                             std::ostream* log = nullptr) {
  std::vector<AblationRow> rows;
  auto run_row = [&](AblationRow row, Experiment ex) {
    for (std::uint64_t seed : grid.seeds) {
      const ExperimentResult r = run_experiment(ex, seed);
      row.accuracies.push_back(r.record.final_val_acc());
      if (log) *log << row.label << " seed " << seed << " val_acc " << r.record.final_val_acc() << '\n';
    }
    rows.push_back(std::move(row));
  };
  for (double frac : grid.shift_fractions)
    for (std::size_t learned : grid.learned_groups)
      for (bool mirror : grid.mirror) {
        Experiment ex = base;
        ex.net.temporal = TemporalMode::tin;
        ex.net.groups = mirror ? 2 * learned : learned;
        ex.net.mirror = mirror;
        ex.net.shift_fraction = frac;
        ex.net.interlace().validate();
        AblationRow row{"G=" + std::to_string(learned) + (mirror ? " +reverse" : ""), true, learned, mirror,
                        ex.net.groups, frac, {}};
        run_row(std::move(row), ex);
      }
  if (grid.include_floor) {
    Experiment ex = base;
    ex.net.temporal = TemporalMode::none;
    run_row(AblationRow{"TIN disabled", false, 0, false, 0, 0.0, {}}, ex);
  }
  return rows;
}

}  // namespace tin
