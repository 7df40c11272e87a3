// tin_cli: equivalence sweep, gradient checks, training, ablation, benchmarks
// and the interlace walkthrough.
//
// Exit codes: 0 all gates passed, 1 a gate failed, 2 configuration or usage
// error, 3 non-finite value.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tin/tin.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kConfig = 2;
constexpr int kNonFinite = 3;

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<double> tol;
  std::optional<std::string> precision;
  bool weight_all_channels = false;
  std::optional<std::size_t> groups;
  std::optional<std::string> mirror;
  std::optional<double> shift_fraction;
  std::vector<std::string> set;
  int verbosity = 0;

  bool all = false;
  std::vector<std::string> ops;
  std::optional<double> offset;
  std::string dump;
  std::string load;
};

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

fs::path results_dir(const Flags& f) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv("TIN_RESULTS_DIR"); env && *env) return env;
  return "results";
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw tin::Error("cannot write " + path.string());
  os << text;
}

std::string config_echo(tin::Settings& s) {
  std::ostringstream os;
  tin::write_config(os, s);
  return os.str();
}

/// Defaults, then the config file, then --set pairs, then dedicated flags.
tin::Settings resolve_settings(const std::string& sub, const Flags& f) {
  tin::Settings s;
  if (!f.config.empty()) tin::load_config(f.config, s);
  for (const auto& kv : f.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw tin::ConfigError("--set expects key=value, got '" + kv + "'");
    tin::set_config_value(s, tin::detail::trim(kv.substr(0, eq)), tin::detail::trim(kv.substr(eq + 1)));
  }
  if (f.seed) {
    s.seed = *f.seed;
    s.grad.seed = *f.seed;
    s.latency.seed = *f.seed;
  }
  if (f.trials) s.equiv_trials = *f.trials;
  if (f.tol) (sub == "gradcheck" ? s.grad.tol : s.equiv_tol) = *f.tol;
  if (f.precision) s.bench_precision = tin::parse_precision(*f.precision);
  if (f.weight_all_channels) {
    s.experiment.net.weight_all_channels = true;
    s.bench_shape.weight_all_channels = true;
  }
  if (f.groups) {
    s.experiment.net.groups = *f.groups;
    s.bench_shape.groups = *f.groups;
  }
  if (f.mirror) s.experiment.net.mirror = tin::detail::parse_bool("--mirror", *f.mirror);
  if (f.shift_fraction) {
    s.experiment.net.shift_fraction = *f.shift_fraction;
    s.bench_shape.shift_fraction = *f.shift_fraction;
  }
  tin::validate_settings(s);
  return s;
}

json to_json(const tin::GradReport& r) {
  json tensors = json::array();
  for (const auto& t : r.tensors)
    tensors.push_back({{"name", t.name},
                       {"numel", t.numel},
                       {"checked", t.checked},
                       {"max_rel_error", t.max_rel_error},
                       {"max_abs_error", t.max_abs_error},
                       {"worst_index", t.worst_index},
                       {"kinks", t.kink_indices}});
  return {{"op", r.op},       {"eps", r.eps},         {"tol", r.tol},
          {"passed", r.passed()}, {"max_rel_error", r.max_rel_error()}, {"kinks", r.kinks()},
          {"tensors", tensors}};
}

json to_json(const tin::EpochStats& e) {
  return {{"epoch", e.epoch},       {"lr", e.lr},           {"train_loss", e.train_loss},
          {"train_acc", e.train_acc}, {"val_loss", e.val_loss}, {"val_acc", e.val_acc}};
}

json to_json(const tin::TinSnapshot& s) {
  return {{"epoch", s.epoch}, {"layer", s.layer}, {"offsets", s.offsets}, {"frame_weights", s.frame_weights}};
}

json to_json(const tin::RunRecord& rec) {
  json epochs = json::array();
  for (const auto& e : rec.epochs) epochs.push_back(to_json(e));
  json traj = json::array();
  for (const auto& s : rec.trajectory) traj.push_back(to_json(s));
  json boundary = json::array();
  for (const auto& b : tin::boundary_weight_stats(rec))
    boundary.push_back({{"layer", b.layer}, {"boundary_mean", b.boundary_mean}, {"center_mean", b.center_mean}});
  return {{"final_val_acc", rec.final_val_acc()},
          {"best_val_acc", rec.best_val_acc()},
          {"epoch_reaching_0.9", rec.epoch_reaching(0.9)},
          {"max_abs_final_offset", rec.max_abs_final_offset()},
          {"boundary_weights", boundary},
          {"epochs", epochs},
          {"trajectory", traj}};
}

json to_json(const tin::FlopsReport& r) {
  return {{"op", r.op}, {"macs", r.macs}, {"macs_unfolded", r.macs_unfolded}, {"adds", r.adds}, {"flops", r.flops()}, {"params", r.params}};
}

json to_json(const tin::LatencyReport& r) {
  return {{"op", r.op},         {"precision", tin::to_string(r.precision)}, {"reps", r.reps},
          {"warmup", r.warmup}, {"median_us", r.median_us}, {"p10_us", r.p10_us}, {"p90_us", r.p90_us}};
}

int cmd_equiv(tin::Settings& s, const fs::path& out) {
  const auto rep = tin::run_equivalence_sweep(s.equiv_trials, s.seed, s.equiv_tol);
  json j = {{"trials", rep.trials},
            {"seed", s.seed},
            {"tol", rep.tol},
            {"failures", rep.failures},
            {"max_abs_diff", rep.max_abs_diff},
            {"integer_offset_max_diff", rep.integer_max_diff},
            {"max_diff_by_kind", rep.max_diff_by_kind},
            {"group_max_diff", rep.group_max_diff},
            {"passed", rep.passed()}};
  json by_frames = json::object();
  for (const auto& [t, d] : rep.max_diff_by_frames) by_frames[std::to_string(t)] = d;
  j["max_diff_by_frames"] = by_frames;
  write_text(out / "config.txt", config_echo(s));
  write_text(out / "equiv.json", dump_json(j));
  std::cout << dump_json(j);
  return rep.passed() ? kPass : kFail;
}

int cmd_gradcheck(tin::Settings& s, const Flags& f, const fs::path& out) {
  if (!f.all && f.ops.empty()) throw tin::ConfigError("gradcheck needs --all or --op NAME");
  std::vector<tin::GradReport> reports = tin::run_gradcheck_suite(s.grad);
  if (!f.all) {
    std::vector<tin::GradReport> picked;
    for (const auto& name : f.ops) {
      const auto it = std::find_if(reports.begin(), reports.end(), [&](const auto& r) { return r.op == name; });
      if (it == reports.end()) throw tin::ConfigError("unknown gradcheck op '" + name + "'");
      picked.push_back(*it);
    }
    reports = std::move(picked);
  }
  json arr = json::array();
  bool ok = true;
  for (const auto& r : reports) {
    arr.push_back(to_json(r));
    ok = ok && r.passed();
  }
  json j = {{"eps", s.grad.eps}, {"samples", s.grad.samples}, {"passed", ok}, {"reports", arr}};
  write_text(out / "config.txt", config_echo(s));
  write_text(out / "gradcheck.json", dump_json(j));
  std::cout << dump_json(j);
  return ok ? kPass : kFail;
}

void save_dataset(const fs::path& dir, const std::string& split, const tin::Dataset& ds) {
  fs::create_directories(dir);
  const auto [x, y] = ds.stacked();
  tin::save_tensor(dir / (split + "_clips.bin"), x);
  tin::save_tensor(dir / (split + "_labels.bin"), y);
}

int cmd_train(tin::Settings& s, const Flags& f, const fs::path& out) {
  tin::Experiment ex = s.experiment;
  ex.task.seed = s.seed;
  ex.train.seed = s.seed;
  ex.net.classes = ex.task.classes();
  ex.net.frames = ex.task.frames;
  ex.net.height = ex.task.height;
  ex.net.width = ex.task.width;
  const tin::Dataset tr = tin::generate_task(ex.task, tin::Split::train, ex.train_size);
  const tin::Dataset va = tin::generate_task(ex.task, tin::Split::val, ex.val_size);
  tin::Rng rng = tin::Rng(s.seed).split(7);
  tin::ToyNet net = tin::ToyNet::build(ex.net, rng);
  if (!f.load.empty()) tin::load_checkpoint(f.load, net.params());

  write_text(out / "config.txt", config_echo(s));
  save_dataset(out / "data", "train", tr);
  save_dataset(out / "data", "val", va);

  const tin::RunRecord rec = tin::train(net, tr, va, ex.train, f.verbosity > 0 ? &std::cerr : nullptr);
  json j = to_json(rec);
  j["params"] = net.param_count();
  write_text(out / "record.json", dump_json(j));
  std::ostringstream csv;
  tin::write_trajectories_csv(csv, rec);
  write_text(out / "trajectories.csv", csv.str());
  if (!f.dump.empty()) tin::save_checkpoint(f.dump, net.params());

  std::cout << "task " << tin::to_string(ex.task.kind) << "  temporal " << tin::to_string(ex.net.temporal)
            << "  final val_acc " << rec.final_val_acc() << "  best " << rec.best_val_acc() << "\n";
  for (const auto& b : tin::boundary_weight_stats(rec))
    std::cout << "layer " << b.layer << "  boundary-frame weight " << b.boundary_mean << "  centre-frame weight "
              << b.center_mean << "\n";
  return kPass;
}

int cmd_ablate(tin::Settings& s, const Flags& f, const fs::path& out) {
  tin::AblationGrid grid = s.ablation;
  grid.seeds = s.seeds;
  const tin::Experiment base = tin::ablation_experiment(s);
  const auto rows = tin::run_ablation(grid, base, f.verbosity > 0 ? &std::cerr : nullptr);

  std::ostringstream csv;
  csv.precision(6);
  csv << "label,tin,learned_groups,mirror,groups,shift_fraction,mean_acc,min_acc,max_acc";
  for (auto seed : grid.seeds) csv << ",seed" << seed;
  csv << "\n";
  json arr = json::array();
  for (const auto& r : rows) {
    csv << r.label << ',' << (r.tin_enabled ? 1 : 0) << ',' << r.learned_groups << ',' << (r.mirror ? 1 : 0) << ','
        << r.total_groups << ',' << r.shift_fraction << ',' << r.mean() << ',' << r.min() << ',' << r.max();
    for (double a : r.accuracies) csv << ',' << a;
    csv << "\n";
    arr.push_back({{"label", r.label},
                   {"tin", r.tin_enabled},
                   {"learned_groups", r.learned_groups},
                   {"mirror", r.mirror},
                   {"groups", r.total_groups},
                   {"shift_fraction", r.shift_fraction},
                   {"mean_acc", r.mean()},
                   {"min_acc", r.min()},
                   {"max_acc", r.max()},
                   {"accuracies", r.accuracies}});
  }
  const std::size_t cells = grid.learned_groups.size() * grid.mirror.size() * grid.shift_fractions.size();
  const bool complete = rows.size() == cells + (grid.include_floor ? 1 : 0) && grid.seeds.size() >= 3;
  json j = {{"seeds", grid.seeds}, {"complete", complete}, {"rows", arr}};
  write_text(out / "config.txt", config_echo(s));
  write_text(out / "ablation.csv", csv.str());
  write_text(out / "ablation.json", dump_json(j));
  std::cout << csv.str();
  return complete ? kPass : kFail;
}

int cmd_bench(tin::Settings& s, const fs::path& out) {
  // FLOPs at the reference shape; latency at the configured shape.
  tin::OpShape ref;
  const auto fi = tin::count_flops(tin::BenchOp::interlace, ref);
  const auto ft = tin::count_flops(tin::BenchOp::tcn3, ref);
  const auto fm = tin::count_flops(tin::BenchOp::tin_module, ref);
  const auto host = tin::resnet50_tin_overhead(8);

  std::ostringstream flops;
  flops << "# " << tin::kFlopsConvention << "\n";
  flops << "op,T,C,H,W,groups,shift_fraction,macs,macs_unfolded,adds,flops,params\n";
  for (const auto& r : {fi, fm, ft})
    flops << r.op << ',' << ref.frames << ',' << ref.channels << ',' << ref.height << ',' << ref.width << ','
          << ref.groups << ',' << ref.shift_fraction << ',' << r.macs << ',' << r.macs_unfolded << ',' << r.adds << ',' << r.flops()
          << ',' << r.params << "\n";

  std::vector<tin::LatencyReport> lat;
  for (auto op : {tin::BenchOp::interlace, tin::BenchOp::tcn3, tin::BenchOp::tin_module})
    lat.push_back(tin::run_latency(op, s.bench_shape, s.bench_precision, s.latency));
  tin::LatencyOptions ident = s.latency;
  ident.identity = true;
  tin::LatencyReport id = tin::run_latency(tin::BenchOp::interlace, s.bench_shape, s.bench_precision, ident);
  id.op = "interlace_identity";
  lat.push_back(id);

  std::ostringstream csv;
  csv << tin::latency_csv_header() << "\n";
  for (const auto& r : lat) csv << tin::latency_csv_row(r) << "\n";

  const double flops_ratio = fi.macs / ft.macs;
  const double speedup = lat[1].median_us / lat[0].median_us;
  const bool flops_ok = flops_ratio < 0.25;
  const bool latency_ok = lat[0].median_us < lat[1].median_us;
  const bool host_ok = host.overhead() < 0.05;
  json lj = json::array();
  for (const auto& r : lat) lj.push_back(to_json(r));
  json j = {{"convention", tin::kFlopsConvention},
            {"flops_shape", {ref.frames, ref.channels, ref.height, ref.width}},
            {"flops", {to_json(fi), to_json(fm), to_json(ft)}},
            {"interlace_over_tcn3_macs", flops_ratio},
            {"interlace_over_tcn3_macs_unfolded", fi.macs_unfolded / ft.macs},
            {"tin_module_over_tcn3_macs", fm.macs / ft.macs},
            {"resnet50_host_macs", host.host_macs},
            {"resnet50_tin_macs", host.tin_macs},
            {"resnet50_tin_overhead", host.overhead()},
            {"latency_shape",
             {s.bench_shape.frames, s.bench_shape.channels, s.bench_shape.height, s.bench_shape.width}},
            {"latency", lj},
            {"tcn3_over_interlace_latency", speedup},
            {"gates", {{"flops_ratio_below_quarter", flops_ok},
                       {"interlace_faster_than_tcn3", latency_ok},
                       {"resnet50_overhead_below_5pct", host_ok}}}};
  write_text(out / "config.txt", config_echo(s));
  write_text(out / "flops.csv", flops.str());
  write_text(out / "latency.csv", csv.str());
  write_text(out / "bench.json", dump_json(j));
  std::cout << flops.str() << "\n" << csv.str() << "\n"
            << "interlace / tcn3 MACs " << flops_ratio << ", tcn3 / interlace latency " << speedup
            << ", ResNet-50 TIN overhead " << host.overhead() * 100.0 << "%\n";
  return flops_ok && latency_ok && host_ok ? kPass : kFail;
}

int cmd_demo(tin::Settings& s, const Flags& f) {
  tin::DemoOptions opt;
  if (f.groups) opt.groups = *f.groups;
  if (f.mirror) opt.mirror = s.experiment.net.mirror;
  if (f.shift_fraction) opt.shift_fraction = *f.shift_fraction;
  opt.weight_all_channels = f.weight_all_channels;
  if (f.offset) opt.offset = *f.offset;
  opt.seed = s.seed;
  tin::run_demo(opt, std::cout);
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal interlacing: operator checks, training lab and benchmarks", "tin_cli"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "key = value configuration file");
  app.add_option("--out", f.out, "results directory (default $TIN_RESULTS_DIR, else ./results)");
  app.add_option("--seed", f.seed, "seed override");
  app.add_option("--trials", f.trials, "equivalence trials");
  app.add_option("--tol", f.tol, "pass tolerance of the invoked check");
  app.add_option("--precision", f.precision, "bench precision")->check(CLI::IsMember({"f32", "f64"}));
  app.add_flag("--weight-all-channels", f.weight_all_channels, "attention on un-shifted channels too");
  app.add_option("--groups", f.groups, "shifted groups");
  app.add_option("--mirror", f.mirror, "mirrored offsets")->check(CLI::IsMember({"on", "off"}));
  app.add_option("--shift-fraction", f.shift_fraction, "fraction of channels shifted");
  app.add_option("--set", f.set, "override any config key, key=value (repeatable)");
  app.add_flag("-v,--verbose", f.verbosity, "progress on stderr");

  auto* equiv = app.add_subcommand("equiv", "interlace vs equivalent-kernel convolution sweep");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every backward pass");
  grad->add_flag("--all", f.all, "run every op");
  grad->add_option("--op", f.ops, "run the named op (repeatable)");
  auto* train = app.add_subcommand("train", "train one toy net on a synthetic task");
  train->add_option("--dump", f.dump, "write trained parameters to this directory");
  train->add_option("--load", f.load, "initialise parameters from this directory");
  auto* ablate = app.add_subcommand("ablate", "group count x mirroring grid with the disabled floor");
  auto* bench = app.add_subcommand("bench", "FLOPs counts and latency of interlace vs dense temporal conv");
  auto* demo = app.add_subcommand("demo", "walk through one interlace call on a tiny clip");
  demo->add_option("--offset", f.offset, "offset of group 0");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kConfig;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  tin::Settings s;
  fs::path out;
  try {
    s = resolve_settings(sub, f);
    out = results_dir(f) / sub;
  } catch (const tin::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }

  try {
    if (equiv->parsed()) return cmd_equiv(s, out);
    if (grad->parsed()) return cmd_gradcheck(s, f, out);
    if (train->parsed()) return cmd_train(s, f, out);
    if (ablate->parsed()) return cmd_ablate(s, f, out);
    if (bench->parsed()) return cmd_bench(s, out);
    if (demo->parsed()) return cmd_demo(s, f);
  } catch (const tin::NonFiniteError& e) {
    std::cerr << "non-finite value: " << e.what() << "\n";
    return kNonFinite;
  } catch (const tin::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const tin::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  }
  return kConfig;
}
