#include <gtest/gtest.h>

#include <cstdlib>

#include "autogel/cli.hpp"
#include "fixtures.hpp"

using namespace autogel;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("autogel_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  std::ostringstream o, e;
  const int code = run_command(std::move(args), o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

std::string edge_list_file(const fs::path& dir) {
  // two 6-cliques joined by two bridges
  std::string text;
  for (int base : {0, 6})
    for (int a = 0; a < 6; ++a)
      for (int b = a + 1; b < 6; ++b) text += std::to_string(base + a) + " " + std::to_string(base + b) + "\n";
  text += "5 6\n0 11\n";
  write_file(dir / "tiny.txt", text);
  return (dir / "tiny.txt").string();
}

std::string tiny_config(const fs::path& dir) {
  const auto cfg = dir / "tiny.conf";
  write_file(cfg, "# tiny run\ntask = lp_homo\ndataset = " + edge_list_file(dir) +
                      "\nhidden_dim = 4\nsearch_epochs = 2\nretrain_epochs = 2\nbatch_size = 8\n"
                      "learning_rate = 0.01\nseeds = 0,1\noutput_dir = " +
                      (dir / "out").string() + "\n");
  return cfg.string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, MinimalLinkConfigTakesTaskDefaults) {
  const auto c = resolve_config({parse_config_text("task = lp_homo\ndataset = usair.txt\n")});
  EXPECT_EQ(c.hidden_dim, 100u);
  EXPECT_EQ(c.layers, 2u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.search_epochs, 300u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3}));
  EXPECT_EQ(c.dropout, 0.0);
  EXPECT_EQ(c.patience, 20u);
  EXPECT_EQ(c.name, "usair");
}

TEST(Config, DefaultsPerTask) {
  const auto kg = resolve_config({{{"task", "lp_kg"}, {"dataset", "fb"}}});
  EXPECT_EQ(kg.hidden_dim, 200u);
  EXPECT_EQ(kg.layers, 1u);
  EXPECT_EQ(kg.batch_size, 128u);
  const auto nc = resolve_config({{{"task", "nc"}, {"dataset", "cora.txt"}, {"labels", "y.csv"}}});
  EXPECT_EQ(nc.hidden_dim, 64u);
  EXPECT_EQ(nc.search_epochs, 30u);
  const auto gc = resolve_config({{{"task", "gc"}, {"dataset", "MUTAG"}}});
  EXPECT_EQ(gc.layers, 4u);
  EXPECT_EQ(gc.hidden_dim, 16u);
  EXPECT_DOUBLE_EQ(gc.learning_rate, 1e-2);
}

TEST(Config, DropoutOutOfRange) {
  try {
    resolve_config({{{"task", "lp_homo"}, {"dataset", "a.txt"}, {"dropout", "1.5"}}});
    FAIL() << "no error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("[0, 1)"), std::string::npos) << e.what();
  }
}

TEST(Config, RangeChecks) {
  auto bad = [](ConfigEntries extra) {
    ConfigEntries e{{"task", "lp_homo"}, {"dataset", "a.txt"}};
    for (const auto& [k, v] : extra) e[k] = v;
    EXPECT_THROW(resolve_config({e}), ConfigError) << extra.begin()->first;
  };
  bad({{"hidden_dim", "0"}});
  bad({{"search_epochs", "0"}});
  bad({{"retrain_epochs", "0"}});
  bad({{"tau_start", "0.1"}, {"tau_end", "0.1"}});
  bad({{"tau_end", "0"}});
  bad({{"learning_rate", "-1"}});
  bad({{"layers", "two"}});
  bad({{"hidden_dim", "-3"}});
  bad({{"seeds", ""}});
  bad({{"ablations", "no_such_flag"}});
  bad({{"ablations", "shared_lambda"}});  // KG only
  bad({{"labels", "y.csv"}});              // nc only
}

TEST(Config, RequiredKeysAreNamed) {
  try {
    resolve_config({{{"task", "gc"}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'dataset'"), std::string::npos);
  }
  try {
    resolve_config({{{"dataset", "x"}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'task'"), std::string::npos);
  }
  EXPECT_THROW(resolve_config({{{"task", "lp_x"}, {"dataset", "x"}}}), ConfigError);
  EXPECT_THROW(resolve_config({{{"task", "nc"}, {"dataset", "x"}}}), ConfigError);
}

TEST(Config, SyntaxErrors) {
  EXPECT_THROW(parse_config_text("task lp_homo\n"), ConfigError);
  EXPECT_THROW(parse_config_text("colour = red\n"), ConfigError);
  EXPECT_THROW(parse_config_text("task = gc\ntask = nc\n"), ConfigError);
  EXPECT_NO_THROW(parse_config_text("# only a comment\n\n  task = gc  # trailing\n"));
  EXPECT_EQ(parse_config_text("  task = gc  # trailing\n").at("task"), "gc");
}

TEST(Config, WriteThenParseIsIdentity) {
  const std::vector<ConfigEntries> cases{
      {{"task", "lp_homo"}, {"dataset", "d/usair.txt"}},
      {{"task", "lp_kg"}, {"dataset", "wn"}, {"arch_learning_rate", "0.0003"}, {"ablations", "shared_lambda,darts_mode"},
       {"tau_start", "2.5"}, {"tau_end", "0.07"}},
      {{"task", "nc"}, {"dataset", "c.txt"}, {"labels", "y.csv"}, {"features", "x.csv"}, {"dropout", "0.3"},
       {"seeds", "7,11"}},
      {{"task", "gc"}, {"dataset", "MUTAG"}, {"learning_rate", "0.1"}, {"ablations", "intra_only"}},
  };
  for (const auto& e : cases) {
    const auto a = resolve_config({e});
    const auto b = resolve_config({parse_config_text(to_text(a))});
    EXPECT_EQ(a, b) << to_text(a);
    EXPECT_EQ(to_text(a), to_text(b));
  }
}

TEST(Config, LaterLayersWin) {
  const ConfigEntries file{{"task", "lp_homo"}, {"dataset", "a.txt"}, {"hidden_dim", "32"}, {"layers", "3"}};
  const ConfigEntries cli{{"hidden_dim", "8"}};
  const auto c = resolve_config({file, cli});
  EXPECT_EQ(c.hidden_dim, 8u);
  EXPECT_EQ(c.layers, 3u);
  EXPECT_EQ(c.batch_size, 64u);
}

TEST(Config, SettingsCarryEveryField) {
  const auto c = resolve_config({{{"task", "gc"}, {"dataset", "m"}, {"arch_learning_rate", "0.5"}, {"dropout", "0.2"}}});
  const auto s = c.settings(9);
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(s.layers, 4u);
  EXPECT_EQ(*s.arch_learning_rate, 0.5);
  EXPECT_EQ(s.dropout, 0.2);
  EXPECT_EQ(s.retrain_epochs, c.retrain_epochs);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, ExitCodes) {
  std::string out, err;
  EXPECT_EQ(run({"search", "--config", "missing.toml"}, &out, &err), 1);
  EXPECT_NE(err.find("not found"), std::string::npos) << err;
  EXPECT_EQ(run({"frobnicate"}, &out, &err), 2);
  EXPECT_EQ(run({}, &out, &err), 2);
  EXPECT_EQ(run({"--help"}, &out, &err), 0);
  EXPECT_EQ(run({"search", "--task", "lp_homo"}, &out, &err), 2);
  EXPECT_NE(err.find("dataset"), std::string::npos) << err;
  EXPECT_EQ(run({"search", "--task", "lp_homo", "--dataset", "x.txt", "--dropout", "1.5"}, &out, &err), 2);
  EXPECT_EQ(run({"search", "--task", "lp_homo", "--dataset", "no/such/file.txt"}, &out, &err), 1);
}

TEST(Cli, GradcheckPasses) {
  std::string out;
  EXPECT_EQ(run({"gradcheck"}, &out), 0);
  EXPECT_NE(out.find("max rel err"), std::string::npos);
  EXPECT_NE(out.find("<= 0.001"), std::string::npos) << out;
  EXPECT_EQ(run({"gradcheck", "--tolerance", "0"}, &out), 1);
}

TEST(Cli, SearchWritesEveryArtifact) {
  TempDir tmp("search");
  const auto cfg = tiny_config(tmp.path);
  std::string out, err;
  ASSERT_EQ(run({"search", "-c", cfg}, &out, &err), 0) << err;
  const auto root = tmp.path / "out" / "tiny" / "lp_homo";
  for (const char* seed : {"seed_0", "seed_1"})
    for (const char* f : {"config.txt", "search_log.jsonl", "architecture.json", "metrics.json", "metrics.csv",
                          "curves.csv", "model.json", "timings.json"})
      EXPECT_TRUE(fs::exists(root / seed / f)) << seed << "/" << f;
  EXPECT_TRUE(fs::exists(root / "metrics.json"));
  // the seed directory replays on its own
  const auto replay = parse_config((root / "seed_1" / "config.txt").string());
  EXPECT_EQ(replay.seeds, std::vector<std::uint64_t>{1});
  EXPECT_EQ(replay.hidden_dim, 4u);
  const auto log = read_file(root / "seed_0" / "search_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
  const auto arch = DerivedArchitecture::from_json(nlohmann::ordered_json::parse(read_file(root / "seed_0" / "architecture.json")));
  EXPECT_EQ(arch.hidden_dim, 4u);
}

TEST(Cli, SameSeedGivesIdenticalFiles) {
  TempDir a("det_a"), b("det_b");
  const auto cfg = tiny_config(a.path);
  ASSERT_EQ(run({"search", "-c", cfg, "--output-dir", (a.path / "r").string()}), 0);
  ASSERT_EQ(run({"search", "-c", cfg, "--output-dir", (b.path / "r").string()}), 0);
  for (const char* f : {"search_log.jsonl", "metrics.json", "metrics.csv", "architecture.json", "model.json"}) {
    EXPECT_EQ(read_file(a.path / "r/tiny/lp_homo/seed_0" / f), read_file(b.path / "r/tiny/lp_homo/seed_0" / f)) << f;
  }
  EXPECT_EQ(read_file(a.path / "r/tiny/lp_homo/metrics.json"), read_file(b.path / "r/tiny/lp_homo/metrics.json"));
}

TEST(Cli, OutputRootFromEnvironment) {
  TempDir tmp("env");
  const auto cfg = tiny_config(tmp.path);
  ::setenv(kOutputRootEnv, (tmp.path / "envroot").string().c_str(), 1);
  const int code = run({"search", "-c", cfg, "--seeds", "0"});
  ::unsetenv(kOutputRootEnv);
  ASSERT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(tmp.path / "envroot/tiny/lp_homo/seed_0/metrics.json"));
  EXPECT_FALSE(fs::exists(tmp.path / "out"));
}

TEST(Cli, TrainAndEvalReuseTheArchitecture) {
  TempDir tmp("train");
  const auto cfg = tiny_config(tmp.path);
  ASSERT_EQ(run({"search", "-c", cfg, "--seeds", "0"}), 0);
  const auto seed_dir = tmp.path / "out/tiny/lp_homo/seed_0";
  std::string out, err;
  ASSERT_EQ(run({"train", "-c", cfg, "--seeds", "0", "-a", (seed_dir / "architecture.json").string()}, &out, &err), 0)
      << err;
  const auto trained = tmp.path / "out/tiny/lp_homo/train/seed_0";
  EXPECT_EQ(read_file(trained / "architecture.json"), read_file(seed_dir / "architecture.json"));
  // retraining the same architecture with the same seed repeats the search run's retrain phase
  EXPECT_EQ(read_file(trained / "metrics.json"), read_file(seed_dir / "metrics.json"));

  ASSERT_EQ(run({"eval", "-c", cfg, "-m", (seed_dir / "model.json").string()}, &out, &err), 0) << err;
  const auto got = nlohmann::json::parse(out);
  const auto want = nlohmann::json::parse(read_file(seed_dir / "metrics.json"));
  EXPECT_EQ(got["auc"].get<double>(), want["test"]["auc"].get<double>());
  EXPECT_EQ(run({"eval", "-c", cfg, "-m", (seed_dir / "model.json").string(), "--split", "nope"}), 2);
  EXPECT_EQ(run({"train", "-c", cfg, "-a", (tmp.path / "missing.json").string()}), 1);
}

TEST(Cli, ReportRecomputesMeanAndStd) {
  TempDir tmp("report");
  const std::vector<double> auc{0.90, 0.94, 0.89, 0.97};
  for (std::size_t s = 0; s < 4; ++s) {
    MetricsReport one;
    one.add(s, "auc", auc[s]);
    write_file(tmp.path / "usair/lp_homo" / ("seed_" + std::to_string(s)) / "metrics.csv", one.to_csv("usair", "lp_homo"));
  }
  std::string out;
  ASSERT_EQ(run({"report", tmp.path.string()}, &out), 0);
  std::istringstream rows(read_file(tmp.path / "summary.csv"));
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  const auto cols = detail::split_csv(row);
  ASSERT_EQ(cols.size(), 7u);
  EXPECT_EQ(cols[0], "usair/lp_homo");
  EXPECT_EQ(cols[3], "auc");
  const double m = (0.90 + 0.94 + 0.89 + 0.97) / 4.0;
  double ss = 0.0;
  for (double x : auc) ss += (x - m) * (x - m);
  EXPECT_NEAR(std::stod(cols[4]), m, 1e-12);
  EXPECT_NEAR(std::stod(cols[5]), std::sqrt(ss / 3.0), 1e-12);
  EXPECT_EQ(cols[6], "4");
  EXPECT_EQ(run({"report", (tmp.path / "nothing").string()}), 1);
}
