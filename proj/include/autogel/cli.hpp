#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "autogel/config.hpp"
#include "autogel/diagnostics.hpp"
#include "autogel/tasks.hpp"

namespace autogel {

namespace fs = std::filesystem;

inline constexpr const char* kOutputRootEnv = "AUTOGEL_OUTPUT_ROOT";

/// Builds the task pipeline for one seed from the dataset paths in `c`.
inline std::unique_ptr<Task> load_task(const RunConfig& c, std::uint64_t seed) {
  switch (c.task) {
    case TaskKind::LinkHomogeneous: {
      const auto g = load_edge_list(c.dataset);
      return std::make_unique<LinkPredictionTask>(split_links(g, SplitRatios{}, seed),
                                                  LinkTaskOptions{c.hops, c.de_cap, 256});
    }
    case TaskKind::LinkKnowledgeGraph: return std::make_unique<KnowledgeGraphTask>(load_kg_dataset(c.dataset));
    case TaskKind::NodeClassification: {
      auto g = load_edge_list(c.dataset);
      if (!c.features.empty()) g.set_features(load_node_features(c.features));
      g.set_labels(load_node_labels(c.labels, g.node_count()));
      return std::make_unique<NodeClassificationTask>(g, seed);
    }
    case TaskKind::GraphClassification: return std::make_unique<GraphClassificationTask>(load_tu_dataset(c.dataset), seed);
  }
  throw ContractError("unknown task");
}

inline fs::path run_root(const RunConfig& c) { return fs::path(c.output_dir) / c.name / task_name(c.task); }

inline void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + p.string());
  out << text;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IngestionError("file not found: " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace detail {

inline RunConfig single_seed(RunConfig c, std::uint64_t seed) {
  c.seeds = {seed};
  return c;
}

inline std::string curves_csv(const std::string& metric, const SearchLog* log, const std::vector<EpochCurve>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "phase,epoch,tau,train_loss,valid_" << metric << "\n";
  if (log)
    for (const auto& r : log->records())
      out << "search," << r.epoch << "," << r.tau << "," << r.train_loss << "," << r.valid << "\n";
  for (const auto& e : curve) out << "retrain," << e.epoch << ",," << e.train_loss << "," << e.valid << "\n";
  return out.str();
}

inline nlohmann::ordered_json model_json(const DerivedArchitecture& arch, std::uint64_t seed, const Supernet& net) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["architecture"] = arch.to_json();
  j["parameters"] = net.save();
  return j;
}

/// Writes the artifacts of one trained seed and adds its test metrics to `report`.
inline void emit_seed(const RunConfig& c, const fs::path& dir, std::uint64_t seed, const Task& task,
                      const DerivedArchitecture& arch, const TrainResult& trained, const SearchLog* log,
                      const nlohmann::ordered_json& timings, MetricsReport& report) {
  const auto metric = task.primary_metric();
  write_file(dir / "config.txt", to_text(single_seed(c, seed)));
  if (log) write_file(dir / "search_log.jsonl", log->to_jsonl());
  write_file(dir / "architecture.json", arch.to_json().dump(2) + "\n");
  write_file(dir / "curves.csv", curves_csv(metric, log, trained.curve));
  write_file(dir / "model.json", model_json(arch, seed, trained.model).dump() + "\n");
  write_file(dir / "timings.json", timings.dump(2) + "\n");

  MetricsReport one;
  nlohmann::ordered_json m;
  m["seed"] = seed;
  m["best_epoch"] = trained.best_epoch;
  m["epochs_run"] = trained.curve.size();
  m["valid"] = trained.valid;
  m["test"] = trained.test;
  for (const auto& [k, v] : trained.test) {
    one.add(seed, k, v);
    report.add(seed, k, v);
  }
  if (const auto* lp = dynamic_cast<const LinkPredictionTask*>(&task)) {
    const double cn = lp->common_neighbors_auc(Split::Test);
    m["test_cn_auc"] = cn;
    one.add(seed, "cn_auc", cn);
    report.add(seed, "cn_auc", cn);
  }
  write_file(dir / "metrics.json", m.dump(2) + "\n");
  write_file(dir / "metrics.csv", one.to_csv(c.name, task_name(c.task)));
}

inline void emit_summary(const RunConfig& c, const fs::path& root, const MetricsReport& report, std::ostream& out) {
  write_file(root / "config.txt", to_text(c));
  write_file(root / "metrics.json", report.to_json().dump(2) + "\n");
  write_file(root / "metrics.csv", report.to_csv(c.name, task_name(c.task)));
  for (const auto& m : report.metrics()) {
    out << c.name << " " << task_name(c.task) << " " << m << " = " << std::fixed << std::setprecision(4)
        << report.mean(m) << " +- " << report.std(m) << " (n=" << report.runs(m) << ")\n";
    out.unsetf(std::ios::fixed);
  }
}

}  // namespace detail

/// search: search, derive and retrain for every seed.
inline MetricsReport command_search(const RunConfig& c, std::ostream& out) {
  MetricsReport report;
  const auto root = run_root(c);
  for (auto seed : c.seeds) {
    const auto task = load_task(c, seed);
    const auto r = run_pipeline(*task, c.settings(seed));
    nlohmann::ordered_json timings{{"search_seconds", r.search_seconds}, {"retrain_seconds", r.retrain_seconds}};
    detail::emit_seed(c, root / ("seed_" + std::to_string(seed)), seed, *task, r.search.architecture, r.retrain,
                      &r.search.log, timings, report);
    out << "seed " << seed << ": derived " << r.search.architecture.to_json()["slots"].dump() << ", test "
        << task->primary_metric() << " = " << r.retrain.test.at(task->primary_metric()) << "\n";
  }
  detail::emit_summary(c, root, report, out);
  return report;
}

/// train: retrain a given architecture for every seed.
inline MetricsReport command_train(const RunConfig& c, const DerivedArchitecture& arch, std::ostream& out) {
  if (arch.space.task != c.task) throw ConfigError("architecture task differs from the config task");
  MetricsReport report;
  const auto root = run_root(c) / "train";
  for (auto seed : c.seeds) {
    const auto task = load_task(c, seed);
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto r = retrain(*task, arch, c.settings(seed));
    nlohmann::ordered_json timings{
        {"retrain_seconds", std::chrono::duration<double>(clock::now() - t0).count()}};
    detail::emit_seed(c, root / ("seed_" + std::to_string(seed)), seed, *task, arch, r, nullptr, timings, report);
    out << "seed " << seed << ": test " << task->primary_metric() << " = " << r.test.at(task->primary_metric()) << "\n";
  }
  detail::emit_summary(c, root, report, out);
  return report;
}

/// eval: metrics of a saved model on one split.
inline std::map<std::string, double> command_eval(const RunConfig& c, const nlohmann::ordered_json& model, Split split) {
  const auto arch = DerivedArchitecture::from_json(model.at("architecture"));
  if (arch.space.task != c.task) throw ConfigError("model task differs from the config task");
  const auto task = load_task(c, model.at("seed").get<std::uint64_t>());
  const auto space = arch.space.restricted(arch.choice);
  Rng rng = Rng::stream(0, "init");
  Supernet net(space, task->dims(arch.hidden_dim), rng);
  net.load(model.at("parameters"));
  return task->evaluate(net, net.first_candidates(), split);
}

/// report: aggregates seed-level metrics.csv files under `inputs`, one
/// group per run directory (the parent of the seed_* folders).
inline std::string command_report(const std::vector<std::string>& inputs, const fs::path& out_dir, std::ostream& out) {
  struct Group {
    std::string dataset, task;
    MetricsReport report;
  };
  std::map<std::string, Group> groups;
  std::ostringstream curves;
  curves << "run,dataset,task,seed,phase,epoch,tau,train_loss,valid\n";
  std::vector<std::pair<fs::path, fs::path>> files;  // (input root, metrics file)
  for (const auto& in : inputs) {
    if (!fs::exists(in)) throw IngestionError("report input not found: " + in);
    for (const auto& e : fs::recursive_directory_iterator(in))
      if (e.path().filename() == "metrics.csv" && e.path().parent_path().filename().string().rfind("seed_", 0) == 0)
        files.push_back({in, e.path()});
  }
  if (files.empty()) throw IngestionError("no per-seed metrics.csv files found");
  std::sort(files.begin(), files.end());
  for (const auto& [root, f] : files) {
    auto run = fs::relative(f.parent_path().parent_path(), root).generic_string();
    if (run.empty()) run = ".";
    std::istringstream rows(read_file(f));
    std::string line, seed;
    std::getline(rows, line);
    auto& g = groups[run];
    while (std::getline(rows, line)) {
      const auto cols = detail::split_csv(line);
      if (cols.size() != 5) throw IngestionError(f.string() + ": malformed row '" + line + "'");
      g.dataset = cols[0];
      g.task = cols[1];
      seed = cols[2];
      g.report.add(std::stoull(cols[2]), cols[3], detail::parse_real("value", cols[4]));
    }
    const auto curve_file = f.parent_path() / "curves.csv";
    if (fs::exists(curve_file) && !seed.empty()) {
      std::istringstream cr(read_file(curve_file));
      std::getline(cr, line);
      while (std::getline(cr, line))
        curves << run << "," << g.dataset << "," << g.task << "," << seed << "," << line << "\n";
    }
  }
  std::ostringstream summary;
  summary.precision(17);
  summary << "run,dataset,task,metric,mean,std,n\n";
  for (const auto& [run, g] : groups)
    for (const auto& m : g.report.metrics()) {
      summary << run << "," << g.dataset << "," << g.task << "," << m << "," << g.report.mean(m) << ","
              << g.report.std(m) << "," << g.report.runs(m) << "\n";
      out << run << " " << m << ": " << g.report.mean(m) << " +- " << g.report.std(m) << " (n=" << g.report.runs(m)
          << ")\n";
    }
  write_file(out_dir / "summary.csv", summary.str());
  write_file(out_dir / "curves.csv", curves.str());
  return summary.str();
}

/// Parses argv and dispatches. Exit codes: 0 success, 1 runtime failure,
/// 2 usage or configuration error.
inline int run_command(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"AutoGEL: differentiable GNN architecture search with link information", "autogel"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "autogel 0.1.0");

  std::string config_path, arch_path, model_path, split_name_arg = "test", output;
  std::vector<std::string> report_inputs;
  double tolerance = 1e-3;
  std::map<std::string, std::string> overrides;

  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "config file (key = value lines)");
    for (const auto& key : RunConfig::keys()) {
      auto flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      sub->add_option_function<std::string>(
          "--" + flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, "override '" + key + "'");
    }
  };
  auto* search_cmd = app.add_subcommand("search", "search, derive and retrain for each seed");
  add_run_options(search_cmd);
  auto* train_cmd = app.add_subcommand("train", "retrain a derived architecture for each seed");
  add_run_options(train_cmd);
  train_cmd->add_option("-a,--architecture", arch_path, "architecture.json from a search run")->required();
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on one split");
  add_run_options(eval_cmd);
  eval_cmd->add_option("-m,--model", model_path, "model.json from a run")->required();
  eval_cmd->add_option("--split", split_name_arg, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad_cmd->add_option("--tolerance", tolerance, "maximum relative error");
  auto* report_cmd = app.add_subcommand("report", "aggregate per-seed metrics into mean/std tables");
  report_cmd->add_option("inputs", report_inputs, "run directories")->required();
  report_cmd->add_option("-o,--output", output, "where summary.csv and curves.csv go (default: first input)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto load_config = [&] {
    std::vector<ConfigEntries> layers;
    if (!config_path.empty()) layers.push_back(read_config_file(config_path));
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) layers.push_back({{"output_dir", root}});
    layers.push_back(overrides);
    return resolve_config(layers);
  };

  try {
    if (search_cmd->parsed()) {
      command_search(load_config(), out);
    } else if (train_cmd->parsed()) {
      const auto c = load_config();
      const auto arch = DerivedArchitecture::from_json(nlohmann::ordered_json::parse(read_file(arch_path)));
      command_train(c, arch, out);
    } else if (eval_cmd->parsed()) {
      const auto c = load_config();
      const auto split = split_name_arg == "train" ? Split::Train : (split_name_arg == "valid" ? Split::Valid : Split::Test);
      nlohmann::ordered_json j = command_eval(c, nlohmann::ordered_json::parse(read_file(model_path)), split);
      out << j.dump() << "\n";
    } else if (grad_cmd->parsed()) {
      double worst = 0.0;
      for (const auto& e : gradcheck_suite()) {
        out << std::left << std::setw(28) << e.name << " " << e.max_error << "\n";
        worst = std::max(worst, e.max_error);
      }
      const bool ok = worst <= tolerance;
      out << "max rel err = " << worst << (ok ? " <= " : " > ") << tolerance << "\n";
      return ok ? 0 : 1;
    } else if (report_cmd->parsed()) {
      command_report(report_inputs, output.empty() ? fs::path(report_inputs.front()) : fs::path(output), out);
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "malformed JSON: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace autogel
