#pragma once

// Parameter checkpoints: one tensor file per named parameter plus a
// manifest.txt of `name = shape` lines.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tin/toy_net.hpp"

namespace tin {

namespace detail {

inline std::string param_file(const std::string& name) { return name + ".bin"; }

inline std::string shape_value(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out.empty() ? "scalar" : out;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const std::vector<NamedParam>& params) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error("cannot write " + (dir / "manifest.txt").string());
  for (const auto& p : params) {
    save_tensor(dir / detail::param_file(p.name), *p.value);
    manifest << p.name << " = " << detail::shape_value(p.value->shape()) << '\n';
  }
}

/// Loads every parameter listed in `params`; names and shapes must match
/// the manifest exactly.
inline void load_checkpoint(const std::filesystem::path& dir, const std::vector<NamedParam>& params) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw ConfigError("no checkpoint manifest in '" + dir.string() + "'");
  std::map<std::string, std::string> shapes;
  std::string line;
  while (std::getline(manifest, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    shapes[line.substr(0, eq)] = line.substr(eq + 3);
  }
  if (shapes.size() != params.size())
    throw ConfigError("checkpoint has " + std::to_string(shapes.size()) + " parameters, network has " +
                      std::to_string(params.size()));
  for (const auto& p : params) {
    const auto it = shapes.find(p.name);
    if (it == shapes.end()) throw ConfigError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second != detail::shape_value(p.value->shape()))
      throw ConfigError("checkpoint shape mismatch for '" + p.name + "'");
    Tensor t = load_tensor(dir / detail::param_file(p.name));
    if (t.shape() != p.value->shape()) throw ConfigError("tensor file shape mismatch for '" + p.name + "'");
    *p.value = std::move(t);
  }
}

}  // namespace tin
