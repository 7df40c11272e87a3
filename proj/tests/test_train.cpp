#include <gtest/gtest.h>

#include <sstream>

#include "tin/config.hpp"
#include "tin/train.hpp"

using namespace tin;

namespace {

Experiment small_experiment(TemporalMode mode = TemporalMode::tin) {
  Experiment ex;
  ex.net.temporal = mode;
  ex.net.channels = 16;
  ex.train_size = 16;
  ex.val_size = 8;
  ex.train.epochs = 2;
  ex.train.milestones = {1};
  return ex;
}

std::vector<Tensor> snapshot(ToyNet& net) {
  std::vector<Tensor> out;
  for (auto& p : net.params()) out.push_back(*p.value);
  return out;
}

}  // namespace

TEST(TrainConfig, StepSchedule) {
  TrainConfig c;
  c.lr = 1.0;
  c.milestones = {2, 4};
  c.lr_factor = 0.5;
  EXPECT_EQ(c.lr_at(0), 1.0);
  EXPECT_EQ(c.lr_at(1), 1.0);
  EXPECT_EQ(c.lr_at(2), 0.5);
  EXPECT_EQ(c.lr_at(5), 0.25);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, ZeroLearningRateAndDecayLeaveParametersUnchanged) {
  Experiment ex = small_experiment();
  ex.task.seed = 3;
  const Dataset tr = generate_task(ex.task, Split::train, 16);
  const Dataset va = generate_task(ex.task, Split::val, 8);
  Rng rng(3);
  ex.net.classes = 2;
  ToyNet net = ToyNet::build(ex.net, rng);
  const auto before = snapshot(net);
  TrainConfig cfg = ex.train;
  cfg.lr = 0.0;
  train(net, tr, va, cfg);
  const auto after = snapshot(net);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST(Train, RecordsEveryEpochAndStartsFromIdentity) {
  const ExperimentResult r = run_experiment(small_experiment(), 5);
  ASSERT_EQ(r.record.epochs.size(), 3u);
  EXPECT_EQ(r.record.epochs[0].epoch, 0u);
  EXPECT_EQ(r.record.epochs[1].lr, 0.005);
  EXPECT_NEAR(r.record.epochs[2].lr, 0.0005, 1e-18);
  // One snapshot per TIN layer per epoch; epoch 0 is exactly identity.
  ASSERT_EQ(r.record.trajectory.size(), 3u);
  for (double o : r.record.trajectory[0].offsets) EXPECT_EQ(o, 0.0);
  for (double w : r.record.trajectory[0].frame_weights) EXPECT_EQ(w, 1.0);
  EXPECT_EQ(r.record.trajectory[0].offsets.size(), 4u);
  EXPECT_EQ(r.record.trajectory[0].frame_weights.size(), 8u);
  EXPECT_GT(r.params, 0u);
}

TEST(Train, SameSeedIsBitIdentical) {
  const ExperimentResult a = run_experiment(small_experiment(), 9);
  const ExperimentResult b = run_experiment(small_experiment(), 9);
  ASSERT_EQ(a.record.epochs.size(), b.record.epochs.size());
  for (std::size_t i = 0; i < a.record.epochs.size(); ++i) {
    EXPECT_EQ(a.record.epochs[i].train_loss, b.record.epochs[i].train_loss);
    EXPECT_EQ(a.record.epochs[i].val_acc, b.record.epochs[i].val_acc);
  }
  EXPECT_EQ(a.record.trajectory.back().offsets, b.record.trajectory.back().offsets);
}

TEST(Train, OffsetsMoveAfterOneEpoch) {
  const ExperimentResult r = run_experiment(small_experiment(), 2);
  double moved = 0;
  for (double o : r.record.trajectory.back().offsets) moved += std::abs(o);
  EXPECT_GT(moved, 0.0);
  for (std::size_t g = 0; g < 2; ++g) EXPECT_EQ(r.record.trajectory.back().offsets[g + 2], -r.record.trajectory.back().offsets[g]);
}

TEST(Train, NoTemporalLayerHasNoTrajectory) {
  const ExperimentResult r = run_experiment(small_experiment(TemporalMode::none), 1);
  EXPECT_TRUE(r.record.trajectory.empty());
  EXPECT_EQ(r.record.max_abs_final_offset(), 0.0);
  EXPECT_TRUE(boundary_weight_stats(r.record).empty());
}

TEST(RunRecord, Summaries) {
  RunRecord rec;
  rec.epochs = {{0, 0, 0, 0, 0, 0.5}, {1, 0, 0, 0, 0, 0.92}, {2, 0, 0, 0, 0, 0.9}};
  EXPECT_EQ(rec.final_val_acc(), 0.9);
  EXPECT_EQ(rec.best_val_acc(), 0.92);
  EXPECT_EQ(rec.epoch_reaching(0.9), 1u);
  rec.trajectory = {{1, 2, {9.0, 9.0}, {}}, {2, 2, {0.5, -1.5}, {2.0, 1.0, 1.0, 0.0}}};
  EXPECT_EQ(rec.max_abs_final_offset(), 1.5);
  const auto b = boundary_weight_stats(rec);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].layer, 2u);
  EXPECT_EQ(b[0].boundary_mean, 1.0);
  EXPECT_EQ(b[0].center_mean, 1.0);
}

TEST(Trajectories, CsvLayout) {
  RunRecord rec;
  rec.trajectory = {{0, 2, {0.0, 0.0}, {1.0, 1.0}}, {1, 2, {0.25, -0.25}, {1.5, 0.5}}};
  std::ostringstream os;
  write_trajectories_csv(os, rec);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "epoch,layer,kind,index,value");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(is, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 8u);
  EXPECT_EQ(last, "1,2,weight,1,0.5");
}

TEST(Ablation, GridRowsAndGroupCounts) {
  AblationGrid grid;
  grid.learned_groups = {1, 2};
  grid.seeds = {1};
  Experiment base = small_experiment();
  base.train.epochs = 1;
  const auto rows = run_ablation(grid, base);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].label, "G=1 +reverse");
  EXPECT_EQ(rows[0].total_groups, 2u);
  EXPECT_EQ(rows[1].total_groups, 1u);
  EXPECT_EQ(rows[3].label, "G=2");
  EXPECT_FALSE(rows[4].tin_enabled);
  for (const auto& r : rows) EXPECT_EQ(r.accuracies.size(), 1u);
}

TEST(Ablation, ReducedExperimentScalesMilestones) {
  Settings s;
  const Experiment ex = ablation_experiment(s);
  EXPECT_EQ(ex.train.epochs, 12u);
  EXPECT_EQ(ex.train.milestones, (std::vector<std::size_t>{6, 10}));
  EXPECT_EQ(ex.net.channels, 32u);
  EXPECT_EQ(ex.train_size, 600u);
  EXPECT_EQ(ex.task.kind, s.experiment.task.kind);
}
