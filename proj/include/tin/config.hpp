#pragma once

// Flat key = value run configuration. Lines are `key = value`; `#` starts a
// comment. Unknown keys and malformed values are ConfigErrors.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tin/bench.hpp"
#include "tin/gradcheck.hpp"
#include "tin/train.hpp"

namespace tin {

struct Settings {
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  Experiment experiment;

  std::size_t equiv_trials = 1000;
  double equiv_tol = 1e-9;

  GradCheckOptions grad;

  OpShape bench_shape{8, 256, 14, 14};
  Precision bench_precision = Precision::f64;
  LatencyOptions latency;

  AblationGrid ablation;
  std::size_t ablate_channels = 32;
  std::size_t ablate_train_size = 600;
  std::size_t ablate_val_size = 200;
  std::size_t ablate_epochs = 12;

  Settings() {
    experiment.net.temporal = TemporalMode::tin;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_f64(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  double out = 0;
  is >> out;
  if (is.fail() || !is.eof() || !std::isfinite(out)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected on/off, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F&& parse_one) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse_one(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + f(xs[i]);
  return out;
}

inline std::string on_off(bool b) { return b ? "on" : "off"; }

inline TemporalMode parse_temporal(const std::string& key, const std::string& v) {
  if (v == "tin") return TemporalMode::tin;
  if (v == "tcn") return TemporalMode::tcn;
  if (v == "none") return TemporalMode::none;
  throw ConfigError(key + ": expected tin, tcn or none, got '" + v + "'");
}

inline WeightNetInput parse_weight_input(const std::string& key, const std::string& v) {
  if (v == "descriptor") return WeightNetInput::descriptor;
  if (v == "pooled") return WeightNetInput::pooled;
  throw ConfigError(key + ": expected descriptor or pooled, got '" + v + "'");
}

inline const char* to_string(WeightNetInput w) { return w == WeightNetInput::descriptor ? "descriptor" : "pooled"; }

}  // namespace detail

struct ConfigField {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

/// Every recognised key, bound to `s`.
inline std::vector<ConfigField> config_fields(Settings& s) {
  using namespace detail;
  std::vector<ConfigField> f;
  auto size_field = [&f](std::string key, std::size_t& ref) {
    f.push_back({key, [&ref, key](const std::string& v) { ref = parse_u64(key, v); },
                 [&ref] { return std::to_string(ref); }});
  };
  auto u64_field = [&f](std::string key, std::uint64_t& ref) {
    f.push_back({key, [&ref, key](const std::string& v) { ref = parse_u64(key, v); },
                 [&ref] { return std::to_string(ref); }});
  };
  auto real_field = [&f](std::string key, double& ref) {
    f.push_back({key, [&ref, key](const std::string& v) { ref = parse_f64(key, v); }, [&ref] { return fmt(ref); }});
  };
  auto bool_field = [&f](std::string key, bool& ref) {
    f.push_back({key, [&ref, key](const std::string& v) { ref = parse_bool(key, v); },
                 [&ref] { return on_off(ref); }});
  };
  Experiment& ex = s.experiment;

  u64_field("seed", s.seed);
  f.push_back({"seeds", [&s](const std::string& v) { s.seeds = parse_list<std::uint64_t>("seeds", v, parse_u64); },
               [&s] { return join(s.seeds, [](auto x) { return std::to_string(x); }); }});

  f.push_back({"task.kind", [&ex](const std::string& v) { ex.task.kind = parse_task(v); },
               [&ex] { return std::string(to_string(ex.task.kind)); }});
  size_field("task.frames", ex.task.frames);
  size_field("task.height", ex.task.height);
  size_field("task.width", ex.task.width);
  real_field("task.noise", ex.task.noise);
  real_field("task.blob_sigma", ex.task.blob_sigma);
  real_field("task.amplitude", ex.task.amplitude);
  size_field("task.train_size", ex.train_size);
  size_field("task.val_size", ex.val_size);

  f.push_back({"net.temporal", [&ex](const std::string& v) { ex.net.temporal = parse_temporal("net.temporal", v); },
               [&ex] { return std::string(to_string(ex.net.temporal)); }});
  size_field("net.channels", ex.net.channels);
  size_field("net.groups", ex.net.groups);
  real_field("net.shift_fraction", ex.net.shift_fraction);
  bool_field("net.mirror", ex.net.mirror);
  bool_field("net.weight_all_channels", ex.net.weight_all_channels);
  f.push_back({"net.weight_input",
               [&ex](const std::string& v) { ex.net.weight_input = parse_weight_input("net.weight_input", v); },
               [&ex] { return std::string(detail::to_string(ex.net.weight_input)); }});

  real_field("train.lr", ex.train.lr);
  f.push_back({"train.milestones",
               [&ex](const std::string& v) {
                 ex.train.milestones = parse_list<std::size_t>("train.milestones", v, parse_u64);
               },
               [&ex] { return join(ex.train.milestones, [](auto x) { return std::to_string(x); }); }});
  real_field("train.lr_factor", ex.train.lr_factor);
  real_field("train.momentum", ex.train.momentum);
  real_field("train.weight_decay", ex.train.weight_decay);
  size_field("train.epochs", ex.train.epochs);
  size_field("train.batch_size", ex.train.batch_size);

  size_field("equiv.trials", s.equiv_trials);
  real_field("equiv.tol", s.equiv_tol);

  real_field("gradcheck.eps", s.grad.eps);
  real_field("gradcheck.tol", s.grad.tol);
  real_field("gradcheck.deep_tol", s.grad.deep_tol);
  size_field("gradcheck.samples", s.grad.samples);

  size_field("bench.frames", s.bench_shape.frames);
  size_field("bench.channels", s.bench_shape.channels);
  size_field("bench.height", s.bench_shape.height);
  size_field("bench.width", s.bench_shape.width);
  size_field("bench.groups", s.bench_shape.groups);
  real_field("bench.shift_fraction", s.bench_shape.shift_fraction);
  bool_field("bench.weight_all_channels", s.bench_shape.weight_all_channels);
  f.push_back({"bench.precision", [&s](const std::string& v) { s.bench_precision = parse_precision(v); },
               [&s] { return std::string(to_string(s.bench_precision)); }});
  size_field("bench.reps", s.latency.reps);
  size_field("bench.warmup", s.latency.warmup);

  f.push_back({"ablate.groups",
               [&s](const std::string& v) {
                 s.ablation.learned_groups = parse_list<std::size_t>("ablate.groups", v, parse_u64);
               },
               [&s] { return join(s.ablation.learned_groups, [](auto x) { return std::to_string(x); }); }});
  f.push_back({"ablate.mirror",
               [&s](const std::string& v) { s.ablation.mirror = parse_list<bool>("ablate.mirror", v, parse_bool); },
               [&s] { return join(s.ablation.mirror, [](bool x) { return on_off(x); }); }});
  f.push_back({"ablate.shift_fractions",
               [&s](const std::string& v) {
                 s.ablation.shift_fractions = parse_list<double>("ablate.shift_fractions", v, parse_f64);
               },
               [&s] { return join(s.ablation.shift_fractions, [](double x) { return fmt(x); }); }});
  bool_field("ablate.include_floor", s.ablation.include_floor);
  size_field("ablate.channels", s.ablate_channels);
  size_field("ablate.train_size", s.ablate_train_size);
  size_field("ablate.val_size", s.ablate_val_size);
  size_field("ablate.epochs", s.ablate_epochs);
  return f;
}

inline void set_config_value(Settings& s, const std::string& key, const std::string& value) {
  for (auto& field : config_fields(s))
    if (field.key == key) return field.set(value);
  throw ConfigError("unknown config key '" + key + "'");
}

inline void parse_config(std::istream& is, Settings& s, const std::string& source = "config") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      set_config_value(s, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void load_config(const std::filesystem::path& path, Settings& s) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path.string() + "'");
  parse_config(is, s, path.string());
}

/// Every key with its current value, in a form parse_config reads back.
inline void write_config(std::ostream& os, Settings& s) {
  for (auto& field : config_fields(s)) os << field.key << " = " << field.get() << '\n';
}

/// Checks cross-field constraints the individual parsers cannot see.
inline void validate_settings(const Settings& s) {
  s.experiment.task.validate();
  s.experiment.train.validate();
  if (s.experiment.train_size == 0 || s.experiment.val_size == 0) throw ConfigError("dataset sizes must be positive");
  if (s.experiment.net.temporal == TemporalMode::tin) {
    ToyNetSpec spec = s.experiment.net;
    spec.frames = s.experiment.task.frames;
    try {
      spec.interlace().validate();
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("net: ") + e.what());
    }
  }
  if (s.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (!(s.equiv_tol > 0.0)) throw ConfigError("equiv.tol must be positive");
  if (!(s.grad.eps > 0.0) || !(s.grad.tol > 0.0) || !(s.grad.deep_tol > 0.0))
    throw ConfigError("gradcheck eps and tolerances must be positive");
}

/// Base experiment for the ablation grid: the configured task and trainer
/// on a smaller budget, with milestones scaled to the shorter schedule.
inline Experiment ablation_experiment(const Settings& s) {
  Experiment ex = s.experiment;
  ex.net.channels = s.ablate_channels;
  ex.train_size = s.ablate_train_size;
  ex.val_size = s.ablate_val_size;
  if (ex.train.epochs != s.ablate_epochs && ex.train.epochs > 0) {
    for (std::size_t& m : ex.train.milestones)
      m = std::max<std::size_t>(1, (m * s.ablate_epochs + ex.train.epochs / 2) / ex.train.epochs);
    ex.train.epochs = s.ablate_epochs;
  }
  return ex;
}

}  // namespace tin
