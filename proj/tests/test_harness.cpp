#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include <sys/wait.h>
#include <unistd.h>

#include "autocost/csv.hpp"
#include "autocost/errors.hpp"
#include "autocost/harness.hpp"

namespace fs = std::filesystem;
using namespace autocost;
using namespace autocost::harness;

namespace {

fs::path scratch(const std::string& tag) {
  const auto p = fs::temp_directory_path() /
                 ("autocost_test_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kSmallConfig = R"(# tiny experiment
name = tiny
algos = PPO, CPO
seeds = 0, 1, 2
horizon = 20
steps_per_iteration = 40
iterations = 2
hidden_sizes = 4
minibatch_size = 20
policy_epochs = 2
value_epochs = 2
eval_episodes = 2
)";

std::string read(const fs::path& p) { return csv::read_text(p.string()); }

}  // namespace

TEST(Config, ParsesValuesAndComments) {
  const auto cfg = ConfigFile::parse("a = 1  # trailing\n\n# full line\nb= x , y\n");
  EXPECT_EQ(cfg.get("a", ""), "1");
  EXPECT_EQ(cfg.get_list("b"), (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(cfg.get_int("a", 0), 1);
  EXPECT_EQ(cfg.get_double("missing", 2.5), 2.5);
}

TEST(Config, Errors) {
  EXPECT_THROW(ConfigFile::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("just words\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("x = 1.5").get_int("x", 0), ConfigError);
  EXPECT_THROW(ConfigFile::parse("x = maybe").get_bool("x", false), ConfigError);
  EXPECT_THROW(ConfigFile::parse("bogus_key = 1").check_known(known_keys()), ConfigError);
  EXPECT_THROW(ConfigFile::load("/nonexistent/file.cfg"), ConfigError);
}

TEST(Config, HashIgnoresOrderAndComments) {
  const auto a = ConfigFile::parse("x = 1\ny = 2\n");
  const auto b = ConfigFile::parse("# c\ny = 2\nx = 1 # c\n");
  const auto c = ConfigFile::parse("x = 1\ny = 3\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Config, BuildsSpec) {
  const auto spec = spec_from_config(ConfigFile::parse(kSmallConfig), 7, "");
  EXPECT_EQ(spec.name, "tiny");
  EXPECT_EQ(spec.algos, (std::vector<rl::Algo>{rl::Algo::PPO, rl::Algo::CPO}));
  EXPECT_EQ(spec.seeds, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(spec.env.horizon, 20);
  EXPECT_EQ(spec.train.hidden_sizes, std::vector<int>{4});
  EXPECT_EQ(spec.master_seed, 7u);
}

TEST(Config, SpecValidation) {
  auto cfg = ConfigFile::parse(kSmallConfig);
  cfg.set("seeds", "");
  EXPECT_THROW(spec_from_config(cfg, 0, ""), ConfigError);
  cfg = ConfigFile::parse(kSmallConfig);
  cfg.set("name", "../escape");
  EXPECT_THROW(spec_from_config(cfg, 0, ""), ConfigError);
  cfg = ConfigFile::parse(kSmallConfig);
  cfg.set("cost", "margin");
  cfg.set("margin_k", "0.5");
  EXPECT_THROW(spec_from_config(cfg, 0, ""), ConfigError);
  cfg = ConfigFile::parse(kSmallConfig);
  cfg.set("cost", "intrinsic");
  EXPECT_THROW(spec_from_config(cfg, 0, ""), ConfigError);
}

TEST(Seeds, RunSeedSharedAcrossAlgorithms) {
  EXPECT_EQ(run_seed(1, "a", 0), run_seed(1, "a", 0));
  EXPECT_NE(run_seed(1, "a", 0), run_seed(1, "a", 1));
  EXPECT_NE(run_seed(1, "a", 0), run_seed(1, "b", 0));
  EXPECT_NE(run_seed(1, "a", 0), run_seed(2, "a", 0));
}

TEST(Experiment, FileAccountingAndRerun) {
  const auto dir = scratch("experiment");
  const auto spec = spec_from_config(ConfigFile::parse(kSmallConfig), 3, dir.string());
  const auto first = run_experiment(spec, 3);
  EXPECT_EQ(first.failures, 0);
  ASSERT_EQ(first.series.size(), 2u);
  int csvs = 0;
  for (const auto& e : fs::directory_iterator(dir / "tiny" / "runs"))
    csvs += e.path().extension() == ".csv";
  EXPECT_EQ(csvs, 6);
  ASSERT_TRUE(fs::exists(dir / "tiny" / "aggregate.csv"));

  std::map<std::string, std::string> before;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) before[e.path().string()] = read(e.path());
  run_experiment(spec, 1);
  for (const auto& [path, text] : before) EXPECT_EQ(read(path), text) << path;

  const auto agg = csv::read_file((dir / "tiny" / "aggregate.csv").string());
  EXPECT_EQ(agg.meta_value("config_hash"), spec.config_hash);
  EXPECT_EQ(agg.rows.size(), 4u);
  EXPECT_GE(agg.column("avg_ep_ret_std"), 0);

  const auto text = report(dir.string());
  EXPECT_NE(text.find("tiny,PPO,3"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Experiment, RunFailureIsRecorded) {
  auto spec = spec_from_config(ConfigFile::parse(kSmallConfig), 3, "");
  spec.train.steps_per_iteration = 5;  // shorter than the horizon
  spec.algos = {rl::Algo::PPO};
  const auto out = run_experiment(spec, 2);
  EXPECT_EQ(out.failures, 3);
  EXPECT_TRUE(out.series.empty());
  for (const auto& r : out.runs) EXPECT_FALSE(r.error.empty());
}

TEST(Aggregate, SingleSeedIsExact) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  std::vector<rl::IterationMetrics> m(5);
  for (int i = 0; i < 5; ++i) m[i] = {i, n(rng), n(rng), n(rng), n(rng), n(rng), n(rng)};
  const auto s = aggregate(rl::Algo::CPO, {m});
  ASSERT_EQ(s.mean.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(s.mean[i].avg_episode_return, m[i].avg_episode_return);
    EXPECT_EQ(s.mean[i].kl, m[i].kl);
    EXPECT_EQ(s.stddev[i].avg_episode_return, 0.0);
  }
}

TEST(Aggregate, PopulationStd) {
  std::vector<rl::IterationMetrics> a(1), b(1);
  a[0].avg_episode_return = 1.0;
  b[0].avg_episode_return = 3.0;
  const auto s = aggregate(rl::Algo::PPO, {a, b});
  EXPECT_EQ(s.mean[0].avg_episode_return, 2.0);
  EXPECT_EQ(s.stddev[0].avg_episode_return, 1.0);
}

TEST(Aggregate, RefusesMixedHashes) {
  std::vector<rl::IterationMetrics> m(2);
  const auto x = rl::metrics_to_csv(m, "aaaa"), y = rl::metrics_to_csv(m, "bbbb");
  EXPECT_NO_THROW(aggregate_run_csvs(rl::Algo::PPO, {x, x}));
  EXPECT_THROW(aggregate_run_csvs(rl::Algo::PPO, {x, y}), ParseError);
}

TEST(Sweep, DeduplicatesAndRejectsEmpty) {
  auto spec = spec_from_config(ConfigFile::parse(kSmallConfig), 3, "");
  spec.algos = {rl::Algo::PPO};
  spec.seeds = {0};
  EXPECT_THROW(sweep_cost_limit(spec, {}), ConfigError);
  const auto out = sweep_cost_limit(spec, {0.5, 0.0, 0.5}, 2);
  EXPECT_EQ(out.limits, (std::vector<double>{0.5, 0.0}));
  EXPECT_EQ(out.results.size(), 2u);
  EXPECT_EQ(out.warnings.size(), 1u);
  EXPECT_EQ(out.results[0].name, "tiny_limit_0.5");
  EXPECT_NE(out.results[0].config_hash, out.results[1].config_hash);
  const auto table = csv::parse(sweep_csv(out));
  EXPECT_EQ(table.rows.size(), 2u);
}

TEST(Sweep, FourPaperLimits) {
  auto spec = spec_from_config(ConfigFile::parse(kSmallConfig), 3, "");
  spec.algos = {rl::Algo::PPOLagrangian};
  spec.seeds = {0};
  spec.train.iterations = 1;
  EXPECT_EQ(sweep_cost_limit(spec, {0.5, 0.0, -0.1, -1.0}).results.size(), 4u);
}

TEST(Heatmap, SingleHazardLayout) {
  const auto params = nn::MlpParams::zeros(cost::intrinsic_architecture());
  const auto cells = heatmap_single_hazard(params, env::WorldConfig{}, {0.5, 0.5}, 4);
  EXPECT_EQ(cells.size(), 16u);
}

TEST(Cli, TrainAndReportThroughBinary) {
  const auto dir = scratch("cli");
  {
    std::ofstream f(dir / "tiny.cfg");
    f << kSmallConfig;
  }
  const std::string cli = AUTOCOST_CLI_PATH;
  const std::string base = "\"" + cli + "\" ";
  const std::string common = " --config \"" + (dir / "tiny.cfg").string() + "\" --out \"" +
                             (dir / "out").string() + "\" --seed 4";
  EXPECT_EQ(std::system((base + "train" + common + " > /dev/null").c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "tiny" / "runs" / "CPO_seed2.csv"));
  EXPECT_EQ(std::system((base + "report --out \"" + (dir / "out").string() + "\" > /dev/null").c_str()), 0);
  // Unknown key: configuration error exit status.
  {
    std::ofstream f(dir / "bad.cfg");
    f << "nonsense = 1\n";
  }
  const int status = std::system((base + "train --config \"" + (dir / "bad.cfg").string() +
                                  "\" --out \"" + (dir / "out").string() + "\" 2> /dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
  fs::remove_all(dir);
}
