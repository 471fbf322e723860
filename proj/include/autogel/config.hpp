#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "autogel/errors.hpp"
#include "autogel/search.hpp"
#include "autogel/search_space.hpp"

namespace autogel {

/// Fully resolved run configuration.
struct RunConfig {
  TaskKind task = TaskKind::LinkHomogeneous;
  std::string dataset;
  std::string features;  // nc only, optional
  std::string labels;    // nc only
  std::string name;      // report label; defaults to the dataset file stem
  std::size_t hidden_dim = 0;
  std::size_t layers = 0;
  double learning_rate = 0.0;
  std::optional<double> arch_learning_rate;
  std::size_t batch_size = 0;
  double dropout = 0.0;
  std::size_t search_epochs = 0;
  std::size_t retrain_epochs = 0;
  double tau_start = 1.0;
  double tau_end = 0.1;
  std::size_t patience = 20;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  Ablations ablations;
  std::string output_dir = "runs";
  std::size_t hops = 2;
  std::size_t de_cap = 3;

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k{
        "task",           "dataset",   "features",      "labels",  "name",      "hidden_dim",
        "layers",         "learning_rate", "arch_learning_rate", "batch_size", "dropout", "search_epochs",
        "retrain_epochs", "tau_start", "tau_end",       "patience", "seeds",    "ablations",
        "output_dir",     "hops",      "de_cap"};
    return k;
  }

  /// Search settings for one seed.
  SearchSettings settings(std::uint64_t seed) const {
    SearchSettings s;
    s.hidden_dim = hidden_dim;
    s.layers = layers;
    s.ablations = ablations;
    s.search_epochs = search_epochs;
    s.retrain_epochs = retrain_epochs;
    s.batch_size = batch_size;
    s.learning_rate = learning_rate;
    s.arch_learning_rate = arch_learning_rate;
    s.dropout = dropout;
    s.tau_start = tau_start;
    s.tau_end = tau_end;
    s.patience = patience;
    s.seed = seed;
    return s;
  }

  bool operator==(const RunConfig&) const = default;
};

/// Per-task defaults (first-listed hyperparameter values).
struct TaskDefaults {
  double learning_rate;
  std::size_t layers;
  std::size_t batch_size;
  std::size_t hidden_dim;
  std::size_t search_epochs;
};

inline TaskDefaults task_defaults(TaskKind t) {
  switch (t) {
    case TaskKind::LinkHomogeneous: return {1e-4, 2, 64, 100, 300};
    case TaskKind::LinkKnowledgeGraph: return {1e-3, 1, 128, 200, 200};
    case TaskKind::NodeClassification: return {1e-3, 2, 64, 64, 30};
    case TaskKind::GraphClassification: return {1e-2, 4, 32, 16, 30};
  }
  throw ContractError("unknown task");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return x;
}

inline std::string format_real(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

}  // namespace detail

/// Key/value pairs as written in a config file or on the command line.
using ConfigEntries = std::map<std::string, std::string>;

/// Flat `key = value` text; `#` starts a comment. Unknown or repeated keys are errors.
inline ConfigEntries parse_config_text(const std::string& text, const std::string& origin = "config") {
  ConfigEntries out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto& known = RunConfig::keys();
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!out.emplace(key, value).second) throw ConfigError(where + ": key '" + key + "' given twice");
  }
  return out;
}

inline ConfigEntries read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("config file not found: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

/// Range checks; messages name the violated bound.
inline void validate(const RunConfig& c) {
  auto positive = [](const char* key, std::size_t v) {
    if (v == 0) throw ConfigError(std::string(key) + " must be > 0");
  };
  positive("hidden_dim", c.hidden_dim);
  positive("layers", c.layers);
  positive("batch_size", c.batch_size);
  positive("search_epochs", c.search_epochs);
  positive("retrain_epochs", c.retrain_epochs);
  positive("patience", c.patience);
  positive("hops", c.hops);
  positive("de_cap", c.de_cap);
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (c.arch_learning_rate && *c.arch_learning_rate < 0.0) throw ConfigError("arch_learning_rate must be >= 0");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1), got " + detail::format_real(c.dropout));
  }
  if (!(c.tau_start > c.tau_end && c.tau_end > 0.0)) throw ConfigError("temperatures must satisfy tau_start > tau_end > 0");
  if (c.seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (c.dataset.empty()) throw ConfigError("missing required key 'dataset'");
  if (c.task == TaskKind::NodeClassification && c.labels.empty()) throw ConfigError("nc needs the 'labels' key");
  if (c.task != TaskKind::NodeClassification && (!c.labels.empty() || !c.features.empty())) {
    throw ConfigError("'features' and 'labels' apply to nc only");
  }
  make_search_space(c.task, c.layers, c.ablations);  // rejects flags that do not apply to the task
}

/// Task defaults, then entries in order of increasing precedence.
inline RunConfig resolve_config(const std::vector<ConfigEntries>& layers) {
  ConfigEntries e;
  for (const auto& l : layers)
    for (const auto& [k, v] : l) e[k] = v;
  if (!e.count("task")) throw ConfigError("missing required key 'task'");
  if (!e.count("dataset")) throw ConfigError("missing required key 'dataset'");
  RunConfig c;
  c.task = parse_task(e["task"]);
  const auto d = task_defaults(c.task);
  c.learning_rate = d.learning_rate;
  c.layers = d.layers;
  c.batch_size = d.batch_size;
  c.hidden_dim = d.hidden_dim;
  c.search_epochs = d.search_epochs;
  c.retrain_epochs = d.search_epochs;
  for (const auto& [k, v] : e) {
    if (k == "task") continue;
    else if (k == "dataset") c.dataset = v;
    else if (k == "features") c.features = v;
    else if (k == "labels") c.labels = v;
    else if (k == "name") c.name = v;
    else if (k == "hidden_dim") c.hidden_dim = detail::parse_count(k, v);
    else if (k == "layers") c.layers = detail::parse_count(k, v);
    else if (k == "learning_rate") c.learning_rate = detail::parse_real(k, v);
    else if (k == "arch_learning_rate") c.arch_learning_rate = v.empty() ? std::nullopt : std::optional(detail::parse_real(k, v));
    else if (k == "batch_size") c.batch_size = detail::parse_count(k, v);
    else if (k == "dropout") c.dropout = detail::parse_real(k, v);
    else if (k == "search_epochs") c.search_epochs = detail::parse_count(k, v);
    else if (k == "retrain_epochs") c.retrain_epochs = detail::parse_count(k, v);
    else if (k == "tau_start") c.tau_start = detail::parse_real(k, v);
    else if (k == "tau_end") c.tau_end = detail::parse_real(k, v);
    else if (k == "patience") c.patience = detail::parse_count(k, v);
    else if (k == "seeds") {
      c.seeds.clear();
      for (const auto& s : detail::split_list(v)) c.seeds.push_back(detail::parse_count(k, s));
    } else if (k == "ablations") c.ablations = Ablations::parse(detail::split_list(v));
    else if (k == "output_dir") c.output_dir = v;
    else if (k == "hops") c.hops = detail::parse_count(k, v);
    else if (k == "de_cap") c.de_cap = detail::parse_count(k, v);
    else throw ConfigError("unknown key '" + k + "'");
  }
  if (c.name.empty()) c.name = std::filesystem::path(c.dataset).stem().string();
  if (c.name.empty()) c.name = std::filesystem::path(c.dataset).parent_path().filename().string();
  validate(c);
  return c;
}

inline RunConfig parse_config(const std::string& path) { return resolve_config({read_config_file(path)}); }

/// Every key written out; parsing the text gives back an equal config.
inline std::string to_text(const RunConfig& c) {
  std::ostringstream out;
  auto list = [](const auto& v) {
    std::string s;
    for (const auto& x : v) {
      if (!s.empty()) s += ",";
      if constexpr (std::is_same_v<std::decay_t<decltype(x)>, std::string>) s += x;
      else s += std::to_string(x);
    }
    return s;
  };
  out << "task = " << task_name(c.task) << "\n"
      << "dataset = " << c.dataset << "\n"
      << "features = " << c.features << "\n"
      << "labels = " << c.labels << "\n"
      << "name = " << c.name << "\n"
      << "hidden_dim = " << c.hidden_dim << "\n"
      << "layers = " << c.layers << "\n"
      << "learning_rate = " << detail::format_real(c.learning_rate) << "\n"
      << "arch_learning_rate = " << (c.arch_learning_rate ? detail::format_real(*c.arch_learning_rate) : "") << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "dropout = " << detail::format_real(c.dropout) << "\n"
      << "search_epochs = " << c.search_epochs << "\n"
      << "retrain_epochs = " << c.retrain_epochs << "\n"
      << "tau_start = " << detail::format_real(c.tau_start) << "\n"
      << "tau_end = " << detail::format_real(c.tau_end) << "\n"
      << "patience = " << c.patience << "\n"
      << "seeds = " << list(c.seeds) << "\n"
      << "ablations = " << list(c.ablations.names()) << "\n"
      << "output_dir = " << c.output_dir << "\n"
      << "hops = " << c.hops << "\n"
      << "de_cap = " << c.de_cap << "\n";
  return out.str();
}

}  // namespace autogel
