#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "poisonctl/attackers.hpp"
#include "poisonctl/costs.hpp"
#include "poisonctl/datastream.hpp"
#include "poisonctl/harness.hpp"
#include "poisonctl/io.hpp"
#include "poisonctl/trajopt.hpp"
#include "poisonctl/victims.hpp"

namespace poisonctl {

/// Configuration problems (bad file, unknown key, malformed value). The CLI
/// maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat "section.key" -> raw string value.
using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline const std::vector<std::pair<std::string, std::set<std::string>>>&
known_config_keys() {
  static const std::vector<std::pair<std::string, std::set<std::string>>>
      table = {
          {"run", {"policies", "seeds", "T", "gamma", "pre_attack_n", "out"}},
          {"victim", {"kind", "eta", "k", "d"}},
          {"cost",
           {"lambda", "nefarious", "metric", "target", "anchor",
            "trigger_features", "trigger_label"}},
          {"env",
           {"kind", "means", "weights", "stddev", "csv", "has_header",
            "label_column", "label_map", "normalize", "d_target"}},
          {"init", {"theta0"}},
          {"trajopt",
           {"horizon", "max_iters", "step_size", "convergence_tol",
            "num_trajectories"}},
      };
  return table;
}

inline void check_known_key(const std::string& section, const std::string& key,
                            const std::string& context = "") {
  for (const auto& [sec, keys] : known_config_keys()) {
    if (sec == section) {
      if (keys.count(key) == 0) {
        throw ConfigError("config: " + context + "unknown key '" + key +
                          "' in section [" + section + "]");
      }
      return;
    }
  }
  throw ConfigError("config: " + context + "unknown section [" + section +
                    "]");
}

}  // namespace detail

/// Strict INI-style parser: [section] headers, key = value lines, full-line
/// comments with '#' or ';'. Unknown sections, unknown keys, and duplicate
/// keys are fatal.
inline ConfigMap parse_config_text(std::istream& in,
                                   const std::string& source) {
  ConfigMap map;
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        throw ConfigError("config: " + source + ":" + std::to_string(lineno) +
                          ": malformed section header");
      }
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: " + source + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("config: " + source + ":" + std::to_string(lineno) +
                        ": key outside any section");
    }
    if (key.empty()) {
      throw ConfigError("config: " + source + ":" + std::to_string(lineno) +
                        ": empty key");
    }
    detail::check_known_key(section, key,
                            source + ":" + std::to_string(lineno) + ": ");
    std::string full = section + "." + key;
    if (map.count(full)) {
      throw ConfigError("config: " + source + ":" + std::to_string(lineno) +
                        ": duplicate key '" + full + "'");
    }
    map[full] = value;
  }
  return map;
}

inline ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot open " + path);
  }
  return parse_config_text(in, path);
}

/// Applies one "key=value" override. The key may be fully qualified
/// ("section.key") or bare when unique across all sections.
inline void apply_override(ConfigMap& map, const std::string& kv) {
  std::size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("config: override '" + kv + "' is not KEY=VALUE");
  }
  std::string key = trim(kv.substr(0, eq));
  std::string value = trim(kv.substr(eq + 1));
  std::size_t dot = key.find('.');
  if (dot != std::string::npos) {
    std::string section = key.substr(0, dot);
    std::string bare = key.substr(dot + 1);
    detail::check_known_key(section, bare);
    map[section + "." + bare] = value;
    return;
  }
  std::string match;
  for (const auto& [sec, keys] : detail::known_config_keys()) {
    if (keys.count(key)) {
      if (!match.empty()) {
        throw ConfigError("config: override key '" + key +
                          "' is ambiguous; qualify it as section.key");
      }
      match = sec + "." + key;
    }
  }
  if (match.empty()) {
    throw ConfigError("config: unknown override key '" + key + "'");
  }
  map[match] = value;
}

/// Canonical dump of a resolved config. The output parses back to the same
/// map, so a manifest is itself a runnable config.
inline void write_manifest(const std::string& path, const ConfigMap& map) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  for (const auto& [section, keys] : detail::known_config_keys()) {
    bool opened = false;
    for (const auto& [full, value] : map) {
      if (full.rfind(section + ".", 0) != 0) continue;
      if (!opened) {
        out << '[' << section << "]\n";
        opened = true;
      }
      out << full.substr(section.size() + 1) << " = " << value << '\n';
    }
    if (opened) out << '\n';
  }
}

/// Fully resolved experiment: the episode template plus the (policy, seed)
/// grid and output directory.
struct RunPlan {
  std::vector<PolicyKind> policies;
  std::vector<std::uint64_t> seeds;
  EpisodeConfig base;
  std::string out_dir;
  ConfigMap resolved;  // post-default, post-override key/value strings
};

namespace detail {

/// Pulls typed values out of a ConfigMap, recording which keys were consumed
/// and what every consumed key resolved to (for the manifest).
struct ConfigResolver {
  ConfigMap in;
  ConfigMap out;
  std::set<std::string> used;

  explicit ConfigResolver(ConfigMap m) : in(std::move(m)) {}

  std::optional<std::string> take(const std::string& key) {
    auto it = in.find(key);
    if (it == in.end()) return std::nullopt;
    used.insert(key);
    out[key] = it->second;
    return it->second;
  }

  std::string take_or(const std::string& key, const std::string& fallback) {
    auto v = take(key);
    if (v.has_value()) return *v;
    out[key] = fallback;
    return fallback;
  }

  std::string require(const std::string& key) {
    auto v = take(key);
    if (!v.has_value()) {
      throw ConfigError("config: missing required key '" + key + "'");
    }
    return *v;
  }

  double number(const std::string& key, const std::string& raw) const {
    double v = 0.0;
    if (!parse_double(raw, v)) {
      throw ConfigError("config: key '" + key + "': cannot parse number '" +
                        raw + "'");
    }
    return v;
  }

  std::uint64_t integer(const std::string& key, const std::string& raw) const {
    double v = number(key, raw);
    if (v < 0.0 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
      throw ConfigError("config: key '" + key +
                        "': expected a nonnegative integer, got '" + raw +
                        "'");
    }
    return static_cast<std::uint64_t>(v);
  }

  bool boolean(const std::string& key, const std::string& raw) const {
    if (raw == "true") return true;
    if (raw == "false") return false;
    throw ConfigError("config: key '" + key + "': expected true/false, got '" +
                      raw + "'");
  }

  std::vector<std::string> split_list(const std::string& raw) const {
    std::vector<std::string> parts;
    std::string item;
    std::stringstream ss(raw);
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    return parts;
  }

  std::vector<double> number_list(const std::string& key,
                                  const std::string& raw) const {
    std::vector<double> vals;
    for (const auto& part : split_list(raw)) {
      vals.push_back(number(key, part));
    }
    if (vals.empty()) {
      throw ConfigError("config: key '" + key + "': empty list");
    }
    return vals;
  }

  void finish() const {
    for (const auto& [key, value] : in) {
      if (used.count(key) == 0) {
        throw ConfigError("config: key '" + key +
                          "' is not applicable to this configuration");
      }
    }
  }
};

inline ModelParams model_from_values(const VictimSpec& victim,
                                     const std::string& key,
                                     const std::vector<double>& values) {
  ModelParams m = victim.make_model();
  if (values.size() != m.values.size()) {
    throw ConfigError("config: key '" + key + "': expected " +
                      std::to_string(m.values.size()) + " values, got " +
                      std::to_string(values.size()));
  }
  m.values = values;
  return m;
}

}  // namespace detail

/// Turns a parsed (and possibly overridden) config map into a runnable plan,
/// materializing every default. Rebuilding from plan.resolved yields the
/// identical plan.
inline RunPlan resolve_run_plan(ConfigMap map) {
  detail::ConfigResolver r(std::move(map));
  RunPlan plan;
  EpisodeConfig& base = plan.base;

  // [run]
  for (const auto& name : r.split_list(r.require("run.policies"))) {
    try {
      plan.policies.push_back(parse_policy(name));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: key 'run.policies': ") +
                        e.what());
    }
  }
  if (plan.policies.empty()) {
    throw ConfigError("config: key 'run.policies': empty list");
  }
  for (const auto& s : r.split_list(r.require("run.seeds"))) {
    plan.seeds.push_back(r.integer("run.seeds", s));
  }
  if (plan.seeds.empty()) {
    throw ConfigError("config: key 'run.seeds': empty list");
  }
  base.T = r.integer("run.T", r.require("run.T"));
  if (base.T < 1) throw ConfigError("config: run.T must be >= 1");
  base.gamma = r.number("run.gamma", r.take_or("run.gamma", "0.99"));
  if (!(base.gamma > 0.0) || base.gamma >= 1.0) {
    throw ConfigError("config: run.gamma must lie in (0,1)");
  }
  base.pre_attack_n =
      r.integer("run.pre_attack_n", r.take_or("run.pre_attack_n", "1000"));
  plan.out_dir = r.take_or("run.out", "out");

  // [victim]
  std::string vkind = r.require("victim.kind");
  if (vkind == "logreg") {
    base.victim.kind = ModelKind::kLogisticRegression;
  } else if (vkind == "kmeans") {
    base.victim.kind = ModelKind::kSoftKMeans;
  } else {
    throw ConfigError("config: victim.kind must be logreg or kmeans, got '" +
                      vkind + "'");
  }
  base.victim.d = r.integer("victim.d", r.require("victim.d"));
  if (base.victim.d < 1) throw ConfigError("config: victim.d must be >= 1");
  base.victim.eta = r.number("victim.eta", r.take_or("victim.eta", "0.01"));
  if (!(base.victim.eta > 0.0)) {
    throw ConfigError("config: victim.eta must be positive");
  }
  if (base.victim.kind == ModelKind::kSoftKMeans) {
    base.victim.k = r.integer("victim.k", r.take_or("victim.k", "1"));
    if (base.victim.k < 1) throw ConfigError("config: victim.k must be >= 1");
  } else {
    base.victim.k = 1;
  }

  // [cost]
  base.cost.lambda = r.number("cost.lambda", r.take_or("cost.lambda", "0"));
  if (base.cost.lambda < 0.0) {
    throw ConfigError("config: cost.lambda must be nonnegative");
  }
  std::string nef = r.take_or("cost.nefarious", "targeted");
  if (nef == "targeted") {
    base.cost.nefarious = NefariousKind::kTargeted;
    std::string metric = r.take_or("cost.metric", "squared");
    if (metric == "squared") {
      base.cost.metric = NefariousMetric::kSquaredDist;
    } else if (metric == "cosine") {
      base.cost.metric = NefariousMetric::kCosineSim;
      if (base.victim.kind == ModelKind::kSoftKMeans) {
        throw ConfigError(
            "config: cost.metric=cosine is incompatible with a k-means "
            "victim");
      }
    } else {
      throw ConfigError("config: cost.metric must be squared or cosine");
    }
    std::string target = r.require("cost.target");
    if (target == "random") {
      base.random_target = true;
    } else {
      base.cost.target = detail::model_from_values(
          base.victim, "cost.target", r.number_list("cost.target", target));
    }
  } else if (nef == "aversion") {
    base.cost.nefarious = NefariousKind::kAversion;
    base.cost.anchor = detail::model_from_values(
        base.victim, "cost.anchor",
        r.number_list("cost.anchor", r.require("cost.anchor")));
  } else if (nef == "backdoor") {
    base.cost.nefarious = NefariousKind::kBackdoor;
    if (base.victim.kind != ModelKind::kLogisticRegression) {
      throw ConfigError(
          "config: cost.nefarious=backdoor requires a logreg victim");
    }
    base.cost.trigger.features = r.number_list(
        "cost.trigger_features", r.require("cost.trigger_features"));
    if (base.cost.trigger.features.size() != base.victim.d) {
      throw ConfigError("config: cost.trigger_features must have victim.d "
                        "entries");
    }
    double tl = r.number("cost.trigger_label", r.require("cost.trigger_label"));
    if (tl != -1.0 && tl != 1.0) {
      throw ConfigError("config: cost.trigger_label must be -1 or 1");
    }
    base.cost.trigger.label = static_cast<int>(tl);
  } else {
    throw ConfigError(
        "config: cost.nefarious must be targeted, aversion, or backdoor");
  }

  // [env]
  std::string ekind = r.require("env.kind");
  if (ekind == "mixture") {
    base.env.kind = EnvironmentSpec::Kind::kGaussianMixture1D;
    base.env.means = r.number_list("env.means", r.require("env.means"));
    base.env.weights = r.number_list("env.weights", r.require("env.weights"));
    base.env.stddev = r.number("env.stddev", r.take_or("env.stddev", "1"));
    try {
      validate_environment(base.env);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (base.victim.d != 1) {
      throw ConfigError(
          "config: a mixture environment is 1-dimensional; victim.d must be "
          "1");
    }
    if (base.victim.kind == ModelKind::kLogisticRegression) {
      throw ConfigError(
          "config: a mixture environment is unlabeled and cannot feed a "
          "logreg victim");
    }
  } else if (ekind == "dataset") {
    base.env.kind = EnvironmentSpec::Kind::kDatasetResample;
    std::string raw_path = r.require("env.csv");
    std::string csv_path =
        std::filesystem::absolute(raw_path).lexically_normal().string();
    // The manifest must be runnable from any directory: store the path as
    // resolved here.
    r.out["env.csv"] = csv_path;
    CsvOptions opts;
    opts.has_header =
        r.boolean("env.has_header", r.take_or("env.has_header", "false"));
    auto label_col = r.take("env.label_column");
    if (label_col.has_value()) {
      opts.label_column = r.integer("env.label_column", *label_col);
    }
    std::string lmap = r.take_or("env.label_map", "");
    try {
      opts.label_map = parse_label_map(lmap);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: env.label_map: ") + e.what());
    }
    bool normalize =
        r.boolean("env.normalize", r.take_or("env.normalize", "true"));
    std::size_t d_target =
        r.integer("env.d_target", r.take_or("env.d_target", "30"));
    if (d_target < 1) throw ConfigError("config: env.d_target must be >= 1");
    if (base.victim.kind == ModelKind::kLogisticRegression &&
        !opts.label_column.has_value()) {
      throw ConfigError(
          "config: a logreg victim needs labels; set env.label_column");
    }
    std::vector<DataPoint> points;
    try {
      points = load_csv(csv_path, opts);
      if (normalize) points = normalize_dataset(std::move(points), d_target);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: env.csv: ") + e.what());
    }
    base.env.points = std::move(points);
    if (base.env.dim() != base.victim.d) {
      throw ConfigError("config: dataset dimension " +
                        std::to_string(base.env.dim()) +
                        " != victim.d " + std::to_string(base.victim.d) +
                        " (after normalization)");
    }
  } else {
    throw ConfigError("config: env.kind must be mixture or dataset");
  }

  // [init]
  std::string theta0 = r.take_or("init.theta0", "random");
  if (theta0 == "random") {
    base.theta0 = std::nullopt;
  } else {
    base.theta0 = detail::model_from_values(
        base.victim, "init.theta0", r.number_list("init.theta0", theta0));
  }

  // [trajopt]
  base.opt.horizon =
      r.integer("trajopt.horizon", r.take_or("trajopt.horizon", "1"));
  base.opt.max_iters =
      r.integer("trajopt.max_iters", r.take_or("trajopt.max_iters", "2000"));
  base.opt.step_size =
      r.number("trajopt.step_size", r.take_or("trajopt.step_size", "0.05"));
  base.opt.convergence_tol = r.number(
      "trajopt.convergence_tol", r.take_or("trajopt.convergence_tol", "1e-6"));
  base.opt.num_trajectories =
      r.integer("trajopt.num_trajectories",
                r.take_or("trajopt.num_trajectories", "1"));
  base.opt.gamma = base.gamma;
  try {
    validate_trajopt_config(base.opt);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  r.finish();
  plan.resolved = std::move(r.out);
  return plan;
}

inline RunPlan load_run_plan(const std::string& path,
                             const std::vector<std::string>& overrides) {
  ConfigMap map = parse_config_file(path);
  for (const auto& kv : overrides) apply_override(map, kv);
  return resolve_run_plan(std::move(map));
}

}  // namespace poisonctl
