#ifndef AUTOCOST_HARNESS_HPP_
#define AUTOCOST_HARNESS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autocost/cost.hpp"
#include "autocost/env.hpp"
#include "autocost/evolution.hpp"
#include "autocost/rl.hpp"

namespace autocost::harness {

// `key = value` lines; `#` starts a comment. Keys are unique.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  // Hex FNV-1a over the sorted entries; independent of comments and order.
  std::string hash() const;
  // Throws ConfigError naming the first key not in `allowed`.
  void check_known(const std::vector<std::string>& allowed) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Every key the config schema accepts.
const std::vector<std::string>& known_keys();

env::WorldConfig world_from_config(const ConfigFile& cfg);
rl::TrainConfig train_from_config(const ConfigFile& cfg);
evolution::EvolutionConfig evolution_from_config(const ConfigFile& cfg);
// `cost` key; `intrinsic` reads parameters from `intrinsic_params`.
cost::CostFn cost_from_config(const ConfigFile& cfg);

struct ExperimentSpec {
  std::string name = "experiment";
  env::WorldConfig env;
  std::vector<rl::Algo> algos = {rl::Algo::PPO};
  cost::CostFn cost_fn;
  rl::TrainConfig train;
  std::vector<int> seeds = {0};  // run indices
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;
  std::string config_hash;
  int eval_episodes = 10;

  void validate() const;
};

ExperimentSpec spec_from_config(const ConfigFile& cfg, std::uint64_t master_seed,
                                const std::string& output_dir);

// Seed of run `index` of experiment `name`; shared by every algorithm.
std::uint64_t run_seed(std::uint64_t master_seed, const std::string& name,
                       int index);

struct RunRecord {
  rl::Algo algo = rl::Algo::PPO;
  int seed_index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<rl::IterationMetrics> metrics;
  int failed_updates = 0;
  rl::EvalResult evaluation;  // final policy, stochastic episodes
  std::string csv_path;
};

struct AggregateSeries {
  rl::Algo algo = rl::Algo::PPO;
  int seed_count = 0;
  std::vector<rl::IterationMetrics> mean;
  std::vector<rl::IterationMetrics> stddev;  // population std (0 for one seed)
};

struct AggregateResult {
  std::string name;
  std::string config_hash;
  std::vector<AggregateSeries> series;
  std::vector<RunRecord> runs;
  int failures = 0;
};

AggregateSeries aggregate(rl::Algo algo,
                          const std::vector<std::vector<rl::IterationMetrics>>& runs);

// algo,iter,n_seeds then <field>_mean,<field>_std per metric field.
std::string aggregate_csv(const AggregateResult& result);

// Trains every (algo, seed) pair on a bounded worker pool. With a non-empty
// output_dir, writes runs/<algo>_seed<k>.csv and aggregate.csv there.
AggregateResult run_experiment(const ExperimentSpec& spec, int workers = 1);

struct SweepResult {
  std::vector<double> limits;  // deduplicated, first occurrence order
  std::vector<AggregateResult> results;
  std::vector<std::string> warnings;
};

SweepResult sweep_cost_limit(const ExperimentSpec& spec,
                             const std::vector<double>& limits, int workers = 1);

// limit,algo,n_seeds,final_ret_mean,final_ret_std,final_cost_mean,final_cost_std
std::string sweep_csv(const SweepResult& sweep, double tail_fraction = 0.1);

// Merges run CSVs of one algorithm; throws ParseError if config hashes differ.
AggregateSeries aggregate_run_csvs(rl::Algo algo,
                                   const std::vector<std::string>& csv_texts);

// Plain-text summary of every aggregate.csv under `dir`.
std::string report(const std::string& dir, double tail_fraction = 0.1);

// Heatmap over a one-hazard layout with the hazard at `center`.
std::vector<cost::HeatmapCell> heatmap_single_hazard(
    const nn::MlpParams& params, const env::WorldConfig& config,
    env::Vec2 center, int grid_resolution);

}  // namespace autocost::harness

#endif  // AUTOCOST_HARNESS_HPP_
