#include "autocost/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autocost/csv.hpp"
#include "autocost/errors.hpp"
#include "autocost/parallel.hpp"
#include "autocost/seeding.hpp"
#include "json.hpp"

namespace autocost::evolution {

void EvolutionConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("evolution config: " + msg);
  };
  require(population_size >= 1, "population_size must be >= 1");
  require(n_stages >= 1, "n_stages must be >= 1");
  require(top_fraction > 0 && top_fraction <= 1, "top_fraction must be in (0, 1]");
  require(population_size * top_fraction >= 1.0 - 1e-12,
          "population_size * top_fraction must be >= 1");
  require(gaussian_sigma >= 0, "gaussian_sigma must be >= 0");
  require(scale_low <= scale_high, "scale bounds must satisfy alpha <= beta");
  require(eval_seeds >= 1, "eval_seeds must be >= 1");
  require(fitness_window > 0 && fitness_window <= 1,
          "fitness_window must be in (0, 1]");
  require(!learners.empty(), "learners must be nonempty");
  env.validate();
  inner.validate();
}

int EvolutionConfig::survivor_count() const {
  const double k = std::ceil(population_size * top_fraction - 1e-9);
  return std::clamp(static_cast<int>(k), 1, population_size);
}

std::vector<Candidate> init_population(const EvolutionConfig& config,
                                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Candidate> pop(static_cast<std::size_t>(config.population_size));
  for (int i = 0; i < config.population_size; ++i) {
    auto& c = pop[static_cast<std::size_t>(i)];
    c.id = i;
    c.params.resize(cost::kIntrinsicParamCount);
    for (int k = 0; k < cost::kIntrinsicParamCount; ++k) c.params[k] = normal(rng);
  }
  return pop;
}

std::vector<std::uint64_t> evaluation_seeds(std::uint64_t master_seed,
                                            int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i)
    seeds.push_back(derive_seed(master_seed, "evaluation", static_cast<std::uint64_t>(i)));
  return seeds;
}

Candidate evaluate(const Candidate& candidate, const EvolutionConfig& config,
                   std::span<const std::uint64_t> seeds) {
  Candidate out = candidate;
  out.evaluated = true;
  out.failed = false;
  out.failure.clear();
  out.per_learner.clear();
  try {
    const auto fn = cost::CostFn::intrinsic(
        nn::MlpParams(cost::intrinsic_architecture(config.hidden_activation),
                      candidate.params));
    double cost_sum = 0.0, ret_sum = 0.0;
    for (rl::Algo algo : config.learners) {
      for (std::uint64_t seed : seeds) {
        const auto run = rl::train(algo, config.env, fn, config.inner, seed);
        LearnerScore s;
        s.algo = algo;
        s.seed = seed;
        s.extrinsic_cost = rl::tail_mean(run.metrics, config.fitness_window,
                                         &rl::IterationMetrics::avg_episode_extrinsic_cost);
        s.ret = rl::tail_mean(run.metrics, config.fitness_window,
                              &rl::IterationMetrics::avg_episode_return);
        if (!std::isfinite(s.extrinsic_cost) || !std::isfinite(s.ret))
          throw NumericalError("non-finite training metrics");
        cost_sum += s.extrinsic_cost;
        ret_sum += s.ret;
        out.per_learner.push_back(s);
      }
    }
    const double n = static_cast<double>(out.per_learner.size());
    out.fitness = cost_sum / n;
    out.mean_return = ret_sum / n;
  } catch (const std::exception& e) {
    out.failed = true;
    out.failure = e.what();
    out.fitness = kFailedFitness;
    out.mean_return = 0.0;
  }
  return out;
}

void evaluate_population(std::vector<Candidate>& population,
                         const EvolutionConfig& config,
                         std::span<const std::uint64_t> seeds, int workers) {
  std::vector<int> todo;
  for (std::size_t i = 0; i < population.size(); ++i)
    if (!population[i].evaluated) todo.push_back(static_cast<int>(i));
  parallel_for(static_cast<int>(todo.size()), workers, [&](int k) {
    auto& slot = population[static_cast<std::size_t>(todo[static_cast<std::size_t>(k)])];
    slot = evaluate(slot, config, seeds);
  });
}

std::vector<int> select(const std::vector<Candidate>& population,
                        const EvolutionConfig& config) {
  const auto k = static_cast<std::size_t>(
      std::min<int>(config.survivor_count(), static_cast<int>(population.size())));
  std::vector<int> order(population.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> zero;
  for (int i : order)
    if (population[static_cast<std::size_t>(i)].fitness == 0.0) zero.push_back(i);
  if (zero.size() > k) {
    std::stable_sort(zero.begin(), zero.end(), [&](int a, int b) {
      return population[static_cast<std::size_t>(a)].mean_return >
             population[static_cast<std::size_t>(b)].mean_return;
    });
    zero.resize(k);
    return zero;
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return population[static_cast<std::size_t>(a)].fitness <
           population[static_cast<std::size_t>(b)].fitness;
  });
  order.resize(k);
  return order;
}

std::vector<Candidate> mutate(const std::vector<Candidate>& survivors,
                              const EvolutionConfig& config,
                              std::mt19937_64& rng, int& next_id) {
  if (survivors.empty()) throw ContractError("mutate: no survivors");
  std::vector<Candidate> next(survivors.begin(), survivors.end());
  if (next.size() > static_cast<std::size_t>(config.population_size))
    next.resize(static_cast<std::size_t>(config.population_size));
  std::uniform_int_distribution<std::size_t> pick(0, survivors.size() - 1);
  std::bernoulli_distribution gaussian_mode(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double span = config.scale_high - config.scale_low;
  while (next.size() < static_cast<std::size_t>(config.population_size)) {
    const Candidate& parent = survivors[pick(rng)];
    Candidate child;
    child.id = next_id++;
    child.params = parent.params;
    if (gaussian_mode(rng)) {
      for (Eigen::Index i = 0; i < child.params.size(); ++i)
        child.params[i] += config.gaussian_sigma * normal(rng);
    } else {
      for (Eigen::Index i = 0; i < child.params.size(); ++i)
        child.params[i] *= config.scale_low + span * unit(rng);
    }
    next.push_back(std::move(child));
  }
  return next;
}

bool better_final(const Candidate& a, const Candidate& b) {
  const bool az = a.fitness == 0.0, bz = b.fitness == 0.0;
  if (az && bz) return a.mean_return > b.mean_return;
  if (az != bz) return az;
  return a.fitness < b.fitness;
}

EvolutionResult run_evolution(const EvolutionConfig& config,
                              std::uint64_t master_seed, int workers,
                              const StageCallback& on_stage) {
  config.validate();
  EvolutionResult result;
  result.seeds = evaluation_seeds(master_seed, config.eval_seeds);
  std::mt19937_64 rng(derive_seed(master_seed, "evolution", 0));
  auto population = init_population(config, rng);
  int next_id = config.population_size;
  bool have_best = false;

  for (int stage = 0; stage < config.n_stages; ++stage) {
    evaluate_population(population, config, result.seeds, workers);
    const auto chosen = select(population, config);
    std::vector<char> is_survivor(population.size(), 0);
    for (int i : chosen) is_survivor[static_cast<std::size_t>(i)] = 1;

    double stage_best = kFailedFitness;
    for (std::size_t i = 0; i < population.size(); ++i) {
      const auto& c = population[i];
      result.history.push_back(
          {stage, c.id, c.fitness, c.mean_return, is_survivor[i] != 0});
      stage_best = std::min(stage_best, c.fitness);
      if (!have_best || better_final(c, result.best)) {
        result.best = c;
        have_best = true;
      }
    }
    result.best_fitness_per_stage.push_back(stage_best);
    if (on_stage) on_stage(stage, population);

    if (stage + 1 < config.n_stages) {
      std::vector<Candidate> survivors;
      for (int i : chosen) survivors.push_back(population[static_cast<std::size_t>(i)]);
      population = mutate(survivors, config, rng, next_id);
    }
  }
  return result;
}

std::string history_csv(const std::vector<HistoryRow>& rows,
                        const std::string& config_hash) {
  std::string out;
  if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
  out += "stage,candidate_id,fitness,mean_return,is_survivor\n";
  for (const auto& r : rows) {
    out += csv::join({std::to_string(r.stage), std::to_string(r.candidate_id),
                      csv::format_double(r.fitness),
                      csv::format_double(r.mean_return),
                      r.is_survivor ? "1" : "0"});
    out += '\n';
  }
  return out;
}

std::vector<HistoryRow> history_from_csv(const std::string& text) {
  const auto table = csv::parse(text);
  table.require_columns(
      {"stage", "candidate_id", "fitness", "mean_return", "is_survivor"});
  std::vector<HistoryRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    HistoryRow r;
    r.stage = static_cast<int>(table.number(i, "stage"));
    r.candidate_id = static_cast<int>(table.number(i, "candidate_id"));
    r.fitness = table.number(i, "fitness");
    r.mean_return = table.number(i, "mean_return");
    r.is_survivor = table.number(i, "is_survivor") != 0.0;
    rows.push_back(r);
  }
  return rows;
}

std::string best_to_json(const EvolutionResult& result,
                         const std::string& config_hash,
                         std::uint64_t master_seed) {
  nlohmann::ordered_json doc;
  const auto& b = result.best;
  std::vector<double> params(b.params.data(), b.params.data() + b.params.size());
  doc["params"] = params;
  doc["candidate_id"] = b.id;
  // JSON has no infinity; a failed best is reported as null.
  if (std::isfinite(b.fitness))
    doc["fitness"] = b.fitness;
  else
    doc["fitness"] = nullptr;
  doc["mean_return"] = b.mean_return;
  doc["config_hash"] = config_hash;
  doc["master_seed"] = master_seed;
  doc["eval_seeds"] = result.seeds;
  return doc.dump(2) + "\n";
}

}  // namespace autocost::evolution
