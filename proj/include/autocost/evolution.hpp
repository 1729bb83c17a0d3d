#ifndef AUTOCOST_EVOLUTION_HPP_
#define AUTOCOST_EVOLUTION_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "autocost/cost.hpp"
#include "autocost/env.hpp"
#include "autocost/rl.hpp"

namespace autocost::evolution {

inline constexpr double kFailedFitness = std::numeric_limits<double>::infinity();

struct EvolutionConfig {
  int population_size = 8;
  int n_stages = 4;
  double top_fraction = 0.125;  // one survivor out of 8
  double gaussian_sigma = 1.0;
  double scale_low = 0.8;   // alpha
  double scale_high = 1.2;  // beta
  int eval_seeds = 2;       // per learner per candidate
  double fitness_window = 0.1;
  std::vector<rl::Algo> learners = {rl::Algo::CPO, rl::Algo::PPOLagrangian};
  nn::Activation hidden_activation = nn::Activation::Sigmoid;
  env::WorldConfig env;
  rl::TrainConfig inner;

  EvolutionConfig() { inner.iterations = 40; }

  void validate() const;  // throws ConfigError
  int survivor_count() const;
};

struct LearnerScore {
  rl::Algo algo = rl::Algo::CPO;
  std::uint64_t seed = 0;
  double extrinsic_cost = 0.0;
  double ret = 0.0;
};

struct Candidate {
  int id = 0;
  Eigen::VectorXd params;  // 41 entries
  bool evaluated = false;
  bool failed = false;
  double fitness = kFailedFitness;
  double mean_return = 0.0;
  std::vector<LearnerScore> per_learner;
  std::string failure;
};

std::vector<Candidate> init_population(const EvolutionConfig& config,
                                       std::mt19937_64& rng);

// The seeds shared by every candidate of one run, so fitness differences
// come from the cost function rather than from the training noise.
std::vector<std::uint64_t> evaluation_seeds(std::uint64_t master_seed,
                                            int count);

// Trains every learner on every seed with total cost = extrinsic + net.
// Any failure marks the candidate failed with +inf fitness.
Candidate evaluate(const Candidate& candidate, const EvolutionConfig& config,
                   std::span<const std::uint64_t> seeds);

// Evaluates the not-yet-evaluated members in parallel.
void evaluate_population(std::vector<Candidate>& population,
                         const EvolutionConfig& config,
                         std::span<const std::uint64_t> seeds, int workers);

// Indices of the survivors, best first.
std::vector<int> select(const std::vector<Candidate>& population,
                        const EvolutionConfig& config);

// Survivors first (unchanged, fitness kept), then mutated children.
// `next_id` supplies fresh candidate ids.
std::vector<Candidate> mutate(const std::vector<Candidate>& survivors,
                              const EvolutionConfig& config,
                              std::mt19937_64& rng, int& next_id);

struct HistoryRow {
  int stage = 0;
  int candidate_id = 0;
  double fitness = 0.0;
  double mean_return = 0.0;
  bool is_survivor = false;
};

struct EvolutionResult {
  Candidate best;
  std::vector<HistoryRow> history;
  std::vector<double> best_fitness_per_stage;  // min fitness in each stage
  std::vector<std::uint64_t> seeds;
};

using StageCallback =
    std::function<void(int stage, const std::vector<Candidate>& population)>;

EvolutionResult run_evolution(const EvolutionConfig& config,
                              std::uint64_t master_seed, int workers = 1,
                              const StageCallback& on_stage = {});

// Among zero-fitness candidates the highest return, otherwise lowest fitness.
bool better_final(const Candidate& a, const Candidate& b);

// stage,candidate_id,fitness,mean_return,is_survivor
std::string history_csv(const std::vector<HistoryRow>& rows,
                        const std::string& config_hash = "");
std::vector<HistoryRow> history_from_csv(const std::string& text);

std::string best_to_json(const EvolutionResult& result,
                         const std::string& config_hash,
                         std::uint64_t master_seed);

}  // namespace autocost::evolution

#endif  // AUTOCOST_EVOLUTION_HPP_
