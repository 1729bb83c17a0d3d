#include "autocost/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "autocost/csv.hpp"
#include "autocost/errors.hpp"
#include "autocost/parallel.hpp"
#include "autocost/seeding.hpp"

namespace fs = std::filesystem;

namespace autocost::harness {

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool filesystem_safe(const std::string& name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
           c == '.';
  });
}

double population_std(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

using Field = double rl::IterationMetrics::*;

struct NamedField {
  const char* name;
  Field field;
};

const std::vector<NamedField>& metric_fields() {
  static const std::vector<NamedField> fields = {
      {"avg_ep_ret", &rl::IterationMetrics::avg_episode_return},
      {"avg_ep_cost_ex", &rl::IterationMetrics::avg_episode_extrinsic_cost},
      {"avg_ep_cost_total", &rl::IterationMetrics::avg_episode_total_cost},
      {"cost_rate", &rl::IterationMetrics::cost_rate},
      {"lambda", &rl::IterationMetrics::lambda},
      {"kl", &rl::IterationMetrics::kl},
  };
  return fields;
}

std::string run_stem(rl::Algo algo, int index) {
  return rl::to_string(algo) + "_seed" + std::to_string(index);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key))
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  try {
    return parse(csv::read_text(path));
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

std::string ConfigFile::get(const std::string& key,
                            const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  try {
    return csv::parse_double(get(key, ""));
  } catch (const ParseError&) {
    throw ConfigError("config key '" + key + "': not a number");
  }
}

int ConfigFile::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  const double v = get_double(key, 0.0);
  if (v != std::floor(v) || std::abs(v) > 2e9)
    throw ConfigError("config key '" + key + "': not an integer");
  return static_cast<int>(v);
}

std::uint64_t ConfigFile::get_u64(const std::string& key,
                                  std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key, "");
  try {
    std::size_t pos = 0;
    const auto out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an unsigned integer");
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false");
}

std::vector<std::string> ConfigFile::get_list(const std::string& key) const {
  return split_list(get(key, ""));
}

void ConfigFile::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string ConfigFile::hash() const {
  std::string canonical;
  for (const auto& [k, v] : values_) canonical += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

void ConfigFile::check_known(const std::vector<std::string>& allowed) const {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : values_)
    if (!ok.count(k)) throw ConfigError("unknown config key '" + k + "'");
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      // experiment
      "name", "algos", "seeds", "cost", "margin_k", "include_extrinsic",
      "intrinsic_params", "intrinsic_hidden", "eval_episodes", "cost_limits",
      // world
      "task", "constraint", "robot", "n_obstacles", "goal_radius",
      "hazard_radius", "pillar_radius", "box_radius", "robot_radius",
      "arena_half_extent", "horizon", "dt", "linear_gain", "angular_gain",
      "lidar_bins", "lidar_max_range", "layout_seed",
      // training
      "steps_per_iteration", "iterations", "gamma", "lambda_gae", "clip_eps",
      "target_kl", "policy_lr", "value_lr", "cost_limit", "lambda_init",
      "lambda_lr", "cg_damping", "cg_iters", "backtrack_steps",
      "backtrack_coeff", "trust_region", "hidden_sizes", "policy_epochs",
      "value_epochs", "minibatch_size", "init_log_std",
      // evolution
      "population_size", "n_stages", "top_fraction", "gaussian_sigma",
      "scale_low", "scale_high", "eval_seeds", "fitness_window", "learners",
      "inner_iterations", "inner_steps_per_iteration",
      // heatmap
      "grid_resolution", "hazard_x", "hazard_y"};
  return keys;
}

env::WorldConfig world_from_config(const ConfigFile& cfg) {
  env::WorldConfig w;
  try {
    if (cfg.has("task")) w.task = env::parse_task(cfg.get("task", ""));
    if (cfg.has("constraint"))
      w.constraint_kind = env::parse_constraint_kind(cfg.get("constraint", ""));
    if (cfg.has("robot")) w.robot_kind = env::parse_robot_kind(cfg.get("robot", ""));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  w.n_obstacles = cfg.get_int("n_obstacles", w.n_obstacles);
  w.goal_radius = cfg.get_double("goal_radius", w.goal_radius);
  w.hazard_radius = cfg.get_double("hazard_radius", w.hazard_radius);
  w.pillar_radius = cfg.get_double("pillar_radius", w.pillar_radius);
  w.box_radius = cfg.get_double("box_radius", w.box_radius);
  w.robot_radius = cfg.get_double("robot_radius", w.robot_radius);
  w.arena_half_extent = cfg.get_double("arena_half_extent", w.arena_half_extent);
  w.horizon = cfg.get_int("horizon", w.horizon);
  w.dt = cfg.get_double("dt", w.dt);
  w.linear_gain = cfg.get_double("linear_gain", w.linear_gain);
  w.angular_gain = cfg.get_double("angular_gain", w.angular_gain);
  w.lidar_bins = cfg.get_int("lidar_bins", w.lidar_bins);
  w.lidar_max_range = cfg.get_double("lidar_max_range", w.lidar_max_range);
  if (cfg.has("layout_seed")) w.layout_seed = cfg.get_u64("layout_seed", 0);
  w.validate();
  return w;
}

rl::TrainConfig train_from_config(const ConfigFile& cfg) {
  rl::TrainConfig t;
  t.steps_per_iteration = cfg.get_int("steps_per_iteration", t.steps_per_iteration);
  t.iterations = cfg.get_int("iterations", t.iterations);
  t.gamma = cfg.get_double("gamma", t.gamma);
  t.lambda_gae = cfg.get_double("lambda_gae", t.lambda_gae);
  t.clip_eps = cfg.get_double("clip_eps", t.clip_eps);
  t.target_kl = cfg.get_double("target_kl", t.target_kl);
  t.policy_lr = cfg.get_double("policy_lr", t.policy_lr);
  t.value_lr = cfg.get_double("value_lr", t.value_lr);
  t.cost_limit = cfg.get_double("cost_limit", t.cost_limit);
  t.lambda_init = cfg.get_double("lambda_init", t.lambda_init);
  t.lambda_lr = cfg.get_double("lambda_lr", t.lambda_lr);
  t.cg_damping = cfg.get_double("cg_damping", t.cg_damping);
  t.cg_iters = cfg.get_int("cg_iters", t.cg_iters);
  t.backtrack_steps = cfg.get_int("backtrack_steps", t.backtrack_steps);
  t.backtrack_coeff = cfg.get_double("backtrack_coeff", t.backtrack_coeff);
  t.trust_region = cfg.get_double("trust_region", t.trust_region);
  if (cfg.has("hidden_sizes")) {
    t.hidden_sizes.clear();
    for (const auto& s : cfg.get_list("hidden_sizes")) {
      try {
        t.hidden_sizes.push_back(std::stoi(s));
      } catch (const std::exception&) {
        throw ConfigError("config key 'hidden_sizes': not an integer list");
      }
    }
  }
  t.policy_epochs = cfg.get_int("policy_epochs", t.policy_epochs);
  t.value_epochs = cfg.get_int("value_epochs", t.value_epochs);
  t.minibatch_size = cfg.get_int("minibatch_size", t.minibatch_size);
  t.init_log_std = cfg.get_double("init_log_std", t.init_log_std);
  t.validate();
  return t;
}

evolution::EvolutionConfig evolution_from_config(const ConfigFile& cfg) {
  evolution::EvolutionConfig e;
  e.env = world_from_config(cfg);
  e.inner = train_from_config(cfg);
  e.inner.iterations = cfg.get_int("inner_iterations", 40);
  e.inner.steps_per_iteration =
      cfg.get_int("inner_steps_per_iteration", e.inner.steps_per_iteration);
  e.population_size = cfg.get_int("population_size", e.population_size);
  e.n_stages = cfg.get_int("n_stages", e.n_stages);
  e.top_fraction = cfg.get_double("top_fraction", e.top_fraction);
  e.gaussian_sigma = cfg.get_double("gaussian_sigma", e.gaussian_sigma);
  e.scale_low = cfg.get_double("scale_low", e.scale_low);
  e.scale_high = cfg.get_double("scale_high", e.scale_high);
  e.eval_seeds = cfg.get_int("eval_seeds", e.eval_seeds);
  e.fitness_window = cfg.get_double("fitness_window", e.fitness_window);
  if (cfg.has("learners")) {
    e.learners.clear();
    for (const auto& s : cfg.get_list("learners")) e.learners.push_back(rl::parse_algo(s));
  }
  if (cfg.has("intrinsic_hidden")) {
    try {
      e.hidden_activation = nn::parse_activation(cfg.get("intrinsic_hidden", ""));
    } catch (const std::exception& ex) {
      throw ConfigError(ex.what());
    }
  }
  e.validate();
  return e;
}

cost::CostFn cost_from_config(const ConfigFile& cfg) {
  cost::CostFn fn;
  const std::string kind = cfg.get("cost", "zero");
  switch (cost::parse_cost_kind(kind)) {
    case cost::CostKind::Zero:
      fn = cost::CostFn::zero();
      break;
    case cost::CostKind::IntrinsicNet: {
      if (!cfg.has("intrinsic_params"))
        throw ConfigError("cost = intrinsic needs 'intrinsic_params'");
      nn::Activation hidden = nn::Activation::Sigmoid;
      if (cfg.has("intrinsic_hidden")) {
        try {
          hidden = nn::parse_activation(cfg.get("intrinsic_hidden", ""));
        } catch (const std::exception& e) {
          throw ConfigError(e.what());
        }
      }
      std::string text;
      try {
        text = csv::read_text(cfg.get("intrinsic_params", ""));
      } catch (const ParseError& e) {
        throw ConfigError(e.what());
      }
      fn = cost::CostFn::intrinsic(cost::params_from_json(text, hidden));
      break;
    }
    case cost::CostKind::Dense:
      fn = cost::CostFn::dense();
      break;
    case cost::CostKind::DistanceChange:
      fn = cost::CostFn::distance_change();
      break;
    case cost::CostKind::IndicatorChange:
      fn = cost::CostFn::indicator_change();
      break;
    case cost::CostKind::Margin:
      fn = cost::CostFn::margin(cfg.get_double("margin_k", 3.0));
      break;
  }
  fn.include_extrinsic = cfg.get_bool("include_extrinsic", true);
  return fn;
}

void ExperimentSpec::validate() const {
  if (!filesystem_safe(name))
    throw ConfigError("experiment name '" + name + "' is not filesystem-safe");
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (algos.empty()) throw ConfigError("experiment needs at least one algorithm");
  if (eval_episodes < 0) throw ConfigError("eval_episodes must be >= 0");
  env.validate();
  train.validate();
}

ExperimentSpec spec_from_config(const ConfigFile& cfg, std::uint64_t master_seed,
                                const std::string& output_dir) {
  cfg.check_known(known_keys());
  ExperimentSpec spec;
  spec.name = cfg.get("name", spec.name);
  spec.env = world_from_config(cfg);
  spec.train = train_from_config(cfg);
  spec.cost_fn = cost_from_config(cfg);
  if (cfg.has("algos")) {
    spec.algos.clear();
    for (const auto& s : cfg.get_list("algos")) spec.algos.push_back(rl::parse_algo(s));
  }
  if (cfg.has("seeds")) {
    spec.seeds.clear();
    for (const auto& s : cfg.get_list("seeds")) {
      try {
        spec.seeds.push_back(std::stoi(s));
      } catch (const std::exception&) {
        throw ConfigError("config key 'seeds': not an integer list");
      }
    }
  }
  spec.eval_episodes = cfg.get_int("eval_episodes", spec.eval_episodes);
  spec.output_dir = output_dir;
  spec.master_seed = master_seed;
  spec.config_hash = cfg.hash();
  spec.validate();
  return spec;
}

std::uint64_t run_seed(std::uint64_t master_seed, const std::string& name,
                       int index) {
  return derive_seed(master_seed, name, static_cast<std::uint64_t>(index));
}

AggregateSeries aggregate(rl::Algo algo,
                          const std::vector<std::vector<rl::IterationMetrics>>& runs) {
  AggregateSeries out;
  out.algo = algo;
  out.seed_count = static_cast<int>(runs.size());
  if (runs.empty()) return out;
  std::size_t len = runs.front().size();
  for (const auto& r : runs) len = std::min(len, r.size());
  for (std::size_t i = 0; i < len; ++i) {
    rl::IterationMetrics mean, sd;
    mean.iteration = sd.iteration = runs.front()[i].iteration;
    for (const auto& f : metric_fields()) {
      std::vector<double> v;
      for (const auto& r : runs) v.push_back(r[i].*(f.field));
      double s = 0.0;
      for (double x : v) s += x;
      const double m = s / static_cast<double>(v.size());
      mean.*(f.field) = m;
      sd.*(f.field) = population_std(v, m);
    }
    out.mean.push_back(mean);
    out.stddev.push_back(sd);
  }
  return out;
}

std::string aggregate_csv(const AggregateResult& result) {
  std::string out;
  if (!result.config_hash.empty())
    out += "# config_hash=" + result.config_hash + "\n";
  std::vector<std::string> header = {"algo", "iter", "n_seeds"};
  for (const auto& f : metric_fields()) {
    header.push_back(std::string(f.name) + "_mean");
    header.push_back(std::string(f.name) + "_std");
  }
  out += csv::join(header) + "\n";
  for (const auto& s : result.series) {
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      std::vector<std::string> row = {rl::to_string(s.algo),
                                      std::to_string(s.mean[i].iteration),
                                      std::to_string(s.seed_count)};
      for (const auto& f : metric_fields()) {
        row.push_back(csv::format_double(s.mean[i].*(f.field)));
        row.push_back(csv::format_double(s.stddev[i].*(f.field)));
      }
      out += csv::join(row) + "\n";
    }
  }
  return out;
}

AggregateResult run_experiment(const ExperimentSpec& spec, int workers) {
  spec.validate();
  AggregateResult result;
  result.name = spec.name;
  result.config_hash = spec.config_hash;
  for (rl::Algo algo : spec.algos) {
    for (int index : spec.seeds) {
      RunRecord r;
      r.algo = algo;
      r.seed_index = index;
      r.seed = run_seed(spec.master_seed, spec.name, index);
      result.runs.push_back(r);
    }
  }

  fs::path dir;
  if (!spec.output_dir.empty()) {
    dir = fs::path(spec.output_dir) / spec.name;
    fs::create_directories(dir / "runs");
  }

  parallel_for(static_cast<int>(result.runs.size()), workers, [&](int i) {
    RunRecord& r = result.runs[static_cast<std::size_t>(i)];
    try {
      auto trained = rl::train(r.algo, spec.env, spec.cost_fn, spec.train, r.seed);
      r.metrics = std::move(trained.metrics);
      r.failed_updates = trained.failed_updates;
      if (spec.eval_episodes > 0)
        r.evaluation = rl::evaluate_policy(trained.agent.policy, spec.env,
                                           spec.eval_episodes, r.seed);
      r.ok = true;
      if (!dir.empty()) {
        const auto stem = run_stem(r.algo, r.seed_index);
        r.csv_path = (dir / "runs" / (stem + ".csv")).string();
        csv::write_file(r.csv_path, rl::metrics_to_csv(r.metrics, spec.config_hash));
        nn::save_policy((dir / "runs" / (stem + ".policy")).string(),
                        trained.agent.policy, r.seed, spec.train.iterations);
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
      if (!dir.empty()) {
        csv::write_file((dir / "runs" / (run_stem(r.algo, r.seed_index) + ".failed")).string(),
                        r.error + "\n");
      }
    }
  });

  for (rl::Algo algo : spec.algos) {
    std::vector<std::vector<rl::IterationMetrics>> ok_runs;
    for (const auto& r : result.runs) {
      if (r.algo != algo) continue;
      if (r.ok)
        ok_runs.push_back(r.metrics);
      else
        ++result.failures;
    }
    if (!ok_runs.empty()) result.series.push_back(aggregate(algo, ok_runs));
  }
  if (!dir.empty()) {
    csv::write_file((dir / "aggregate.csv").string(), aggregate_csv(result));
    std::string evals = "# config_hash=" + spec.config_hash + "\n";
    evals += "algo,seed_index,ok,eval_return,eval_cost_ex\n";
    for (const auto& r : result.runs) {
      evals += csv::join({rl::to_string(r.algo), std::to_string(r.seed_index),
                          r.ok ? "1" : "0",
                          csv::format_double(r.evaluation.mean_return),
                          csv::format_double(r.evaluation.mean_extrinsic_cost)}) +
               "\n";
    }
    csv::write_file((dir / "evaluation.csv").string(), evals);
  }
  return result;
}

SweepResult sweep_cost_limit(const ExperimentSpec& spec,
                             const std::vector<double>& limits, int workers) {
  if (limits.empty()) throw ConfigError("cost limit sweep needs at least one limit");
  SweepResult sweep;
  for (double d : limits) {
    if (std::find(sweep.limits.begin(), sweep.limits.end(), d) != sweep.limits.end()) {
      sweep.warnings.push_back("duplicate cost limit " + csv::format_double(d) +
                               " ignored");
      continue;
    }
    sweep.limits.push_back(d);
  }
  for (double d : sweep.limits) {
    ExperimentSpec sub = spec;
    sub.train.cost_limit = d;
    sub.name = spec.name + "_limit_" + csv::format_double(d);
    // The limit is part of the configuration; keep hashes distinct.
    sub.config_hash = spec.config_hash + "-d" + csv::format_double(d);
    sweep.results.push_back(run_experiment(sub, workers));
  }
  return sweep;
}

std::string sweep_csv(const SweepResult& sweep, double tail_fraction) {
  std::string out =
      "limit,algo,n_seeds,final_ret_mean,final_ret_std,final_cost_mean,final_cost_std\n";
  for (std::size_t i = 0; i < sweep.limits.size(); ++i) {
    const auto& res = sweep.results[i];
    for (rl::Algo algo : [&] {
           std::vector<rl::Algo> a;
           for (const auto& s : res.series) a.push_back(s.algo);
           return a;
         }()) {
      std::vector<double> rets, costs;
      for (const auto& r : res.runs) {
        if (r.algo != algo || !r.ok) continue;
        rets.push_back(rl::tail_mean(r.metrics, tail_fraction,
                                     &rl::IterationMetrics::avg_episode_return));
        costs.push_back(rl::tail_mean(r.metrics, tail_fraction,
                                      &rl::IterationMetrics::avg_episode_extrinsic_cost));
      }
      auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      const double mr = mean(rets), mc = mean(costs);
      out += csv::join({csv::format_double(sweep.limits[i]), rl::to_string(algo),
                        std::to_string(rets.size()), csv::format_double(mr),
                        csv::format_double(population_std(rets, mr)),
                        csv::format_double(mc),
                        csv::format_double(population_std(costs, mc))}) +
             "\n";
    }
  }
  return out;
}

AggregateSeries aggregate_run_csvs(rl::Algo algo,
                                   const std::vector<std::string>& csv_texts) {
  std::vector<std::vector<rl::IterationMetrics>> runs;
  std::string hash;
  for (std::size_t i = 0; i < csv_texts.size(); ++i) {
    const auto table = csv::parse(csv_texts[i]);
    const std::string h = table.meta_value("config_hash");
    if (i == 0)
      hash = h;
    else if (h != hash)
      throw ParseError("config hash mismatch: '" + h + "' vs '" + hash +
                       "'; refusing to merge");
    runs.push_back(rl::metrics_from_csv(csv_texts[i]));
  }
  return aggregate(algo, runs);
}

std::string report(const std::string& dir, double tail_fraction) {
  std::vector<fs::path> files;
  if (fs::exists(dir)) {
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() == "aggregate.csv")
        files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ParseError("no aggregate.csv found under " + dir);
  std::ostringstream out;
  out << "experiment,algo,n_seeds,final_ret,final_ret_std,final_cost_ex,final_cost_ex_std\n";
  for (const auto& f : files) {
    const auto table = csv::read_file(f.string());
    table.require_columns({"algo", "iter", "n_seeds", "avg_ep_ret_mean",
                           "avg_ep_ret_std", "avg_ep_cost_ex_mean",
                           "avg_ep_cost_ex_std"});
    std::map<std::string, std::vector<std::size_t>> rows_by_algo;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& a = table.text(i, "algo");
      if (!rows_by_algo.count(a)) order.push_back(a);
      rows_by_algo[a].push_back(i);
    }
    for (const auto& a : order) {
      const auto& rows = rows_by_algo[a];
      const auto n = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(tail_fraction * rows.size())));
      double r = 0, rs = 0, c = 0, cs = 0;
      for (std::size_t k = rows.size() - n; k < rows.size(); ++k) {
        r += table.number(rows[k], "avg_ep_ret_mean");
        rs += table.number(rows[k], "avg_ep_ret_std");
        c += table.number(rows[k], "avg_ep_cost_ex_mean");
        cs += table.number(rows[k], "avg_ep_cost_ex_std");
      }
      const double dn = static_cast<double>(n);
      out << f.parent_path().filename().string() << ',' << a << ','
          << table.text(rows.front(), "n_seeds") << ','
          << csv::format_double(r / dn) << ',' << csv::format_double(rs / dn) << ','
          << csv::format_double(c / dn) << ',' << csv::format_double(cs / dn) << '\n';
    }
  }
  return out.str();
}

std::vector<cost::HeatmapCell> heatmap_single_hazard(
    const nn::MlpParams& params, const env::WorldConfig& config,
    env::Vec2 center, int grid_resolution) {
  env::WorldConfig single = config;
  single.constraint_kind = env::ConstraintKind::Hazard;
  single.n_obstacles = 1;
  env::WorldState world;
  world.obstacles = {center};
  return cost::heatmap(params, single, world, grid_resolution);
}

}  // namespace autocost::harness
