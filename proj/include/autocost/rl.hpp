#ifndef AUTOCOST_RL_HPP_
#define AUTOCOST_RL_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "autocost/cost.hpp"
#include "autocost/env.hpp"
#include "autocost/nn.hpp"

namespace autocost::rl {

enum class Algo { PPO, PPOLagrangian, CPO };

std::string to_string(Algo algo);
Algo parse_algo(const std::string& text);

struct TrainConfig {
  int steps_per_iteration = 4000;
  int iterations = 150;
  double gamma = 0.99;
  double lambda_gae = 0.97;
  double clip_eps = 0.2;
  double target_kl = 0.01;
  double policy_lr = 0.0004;
  double value_lr = 0.001;
  double cost_limit = 0.0;  // may be negative
  double lambda_init = 0.0;
  double lambda_lr = 0.05;
  double cg_damping = 0.1;
  int cg_iters = 10;
  int backtrack_steps = 10;
  double backtrack_coeff = 0.8;
  double trust_region = 0.01;  // delta
  std::vector<int> hidden_sizes = {32, 32};
  int policy_epochs = 10;
  int value_epochs = 10;
  int minibatch_size = 500;
  double init_log_std = -0.5;

  void validate() const;  // throws ConfigError
};

struct EpisodeStats {
  double ret = 0.0;
  double cost_extrinsic = 0.0;
  double cost_total = 0.0;
  int length = 0;
  int violations = 0;
  int goals = 0;
};

// Column-per-step storage of one iteration's experience.
struct TrajectoryBatch {
  Eigen::MatrixXd observations;  // n_obs x N
  Eigen::MatrixXd actions;       // n_act x N (unclamped samples)
  std::vector<double> rewards;
  std::vector<double> extrinsic_cost;
  std::vector<double> intrinsic_cost;
  std::vector<double> total_cost;
  std::vector<double> log_prob_old;
  std::vector<double> reward_value_pred;
  std::vector<double> cost_value_pred;
  std::vector<std::uint8_t> episode_end;
  std::vector<std::uint8_t> violation;
  std::vector<EpisodeStats> episodes;

  std::size_t size() const { return rewards.size(); }
  double mean_episode_return() const;
  double mean_episode_extrinsic_cost() const;
  double mean_episode_total_cost() const;
  double mean_episode_length() const;
  double cost_rate() const;  // violating steps / steps
};

struct Critic {
  nn::MlpParams net;
  nn::Adam optimizer;
};

struct Agent {
  nn::GaussianPolicy policy;
  nn::Adam policy_optimizer;
  Critic reward_critic;
  Critic cost_critic;
  double lagrange_multiplier = 0.0;
};

Agent make_agent(int obs_size, int action_size, const TrainConfig& config,
                 std::mt19937_64& rng);

// Runs whole episodes until at least n_steps transitions are stored.
// Episode layouts are seeded from `rng`.
TrajectoryBatch collect_rollout(const Agent& agent,
                                const env::WorldConfig& env_config,
                                const cost::CostFn& cost_fn, int n_steps,
                                std::mt19937_64& rng);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

// `values` holds, per episode, one prediction per step followed by one
// bootstrap value (0 at a true horizon end), so
// values.size() == rewards.size() + number of episode ends.
// The final step must end an episode.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> episode_end, double gamma,
              double lambda);

// Inserts `bootstrap` after every episode end, matching gae's layout.
std::vector<double> with_bootstrap(std::span<const double> values,
                                   std::span<const std::uint8_t> episode_end,
                                   double bootstrap = 0.0);

// (a - mean) / std over the batch.
std::vector<double> normalize_advantages(std::span<const double> adv);
std::vector<double> center_advantages(std::span<const double> adv);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)
double ppo_clip_objective(double ratio, double advantage, double eps);

// Gradient over the flat policy parameters of sum_i w_i log pi(a_i | s_i).
Eigen::VectorXd weighted_log_prob_gradient(const nn::GaussianPolicy& policy,
                                           const Eigen::MatrixXd& observations,
                                           const Eigen::MatrixXd& actions,
                                           std::span<const double> weights);

// Gradient of the mean clipped surrogate; with ratio == 1 everywhere this is
// the vanilla policy gradient mean(A * grad log pi).
Eigen::VectorXd clipped_surrogate_gradient(const nn::GaussianPolicy& policy,
                                           const Eigen::MatrixXd& observations,
                                           const Eigen::MatrixXd& actions,
                                           std::span<const double> log_prob_old,
                                           std::span<const double> advantages,
                                           double clip_eps,
                                           double* objective = nullptr);

struct PpoResult {
  nn::GaussianPolicy policy;
  double achieved_kl = 0.0;
  int epochs = 0;
  bool early_stopped = false;
};

// Advantages are used as given (normalize them first). Throws NumericalError
// on a non-finite loss.
PpoResult ppo_update(const nn::GaussianPolicy& policy, nn::Adam& optimizer,
                     const TrajectoryBatch& batch,
                     std::span<const double> advantages,
                     const TrainConfig& config, std::mt19937_64& rng);

// max(0, lambda + lr * (episode_cost - limit))
double update_lagrange_multiplier(double lambda, double episode_cost,
                                  double limit, double lr);

struct LagrangianResult {
  nn::GaussianPolicy policy;
  double lambda = 0.0;
  double achieved_kl = 0.0;
};

// J_c is the batch's mean undiscounted episode total cost. The policy takes
// a PPO step on (A_r - lambda' * A_c) / (1 + lambda').
LagrangianResult lagrangian_update(const nn::GaussianPolicy& policy,
                                   nn::Adam& optimizer, double lambda,
                                   const TrajectoryBatch& batch,
                                   std::span<const double> reward_adv,
                                   std::span<const double> cost_adv,
                                   const TrainConfig& config,
                                   std::mt19937_64& rng);

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct CgResult {
  Eigen::VectorXd x;
  bool converged = false;  // finite with residual below the starting one
  double residual = 0.0;
};

CgResult conjugate_gradient(const LinearOperator& apply,
                            const Eigen::VectorXd& rhs, int iters,
                            double tolerance = 1e-10);

// Which branch of the trust-region subproblem was taken.
enum class CpoCase {
  Recovery = 0,        // whole trust region infeasible
  PartlyFeasible = 1,  // infeasible at x = 0, boundary crosses region
  MostlyFeasible = 2,  // feasible at x = 0, boundary crosses region
  AllFeasible = 3,     // constraint inactive inside the region
  NoCostGradient = 4   // feasible with zero cost gradient: plain TRPO
};

struct CpoStep {
  Eigen::VectorXd step;  // added to the parameters
  CpoCase optim_case = CpoCase::NoCostGradient;
  double lambda = 0.0;
  double nu = 0.0;
  bool cg_converged = true;
};

// max g.x  s.t.  c + b.x <= 0,  0.5 x'Hx <= delta,  H applied by `hvp`.
CpoStep solve_cpo_subproblem(const Eigen::VectorXd& g, const Eigen::VectorXd& b,
                             double c, const LinearOperator& hvp, double delta,
                             int cg_iters);

struct CpoDiagnostics {
  CpoCase optim_case = CpoCase::NoCostGradient;
  bool accepted = false;
  int backtracks = 0;
  double kl = 0.0;  // measured KL of the accepted step (0 if rejected)
  double constraint_slack = 0.0;  // c
  bool cg_converged = true;
  std::string warning;
};

struct CpoResult {
  nn::GaussianPolicy policy;
  CpoDiagnostics diagnostics;
};

// Fisher-vector product of the mean-KL at `policy`, plus damping * v.
LinearOperator fisher_vector_product(const nn::GaussianPolicy& policy,
                                     const Eigen::MatrixXd& observations,
                                     double damping);

// reward_adv normalized, cost_adv centered. episode_cost is J_c and is
// compared with config.cost_limit after dividing by the mean episode length.
CpoResult cpo_update(const nn::GaussianPolicy& policy,
                     const TrajectoryBatch& batch,
                     std::span<const double> reward_adv,
                     std::span<const double> cost_adv, double episode_cost,
                     const TrainConfig& config);

// Mean-squared-error regression toward `targets`; returns the updated critic.
Critic value_update(const Critic& critic, const Eigen::MatrixXd& observations,
                    std::span<const double> targets, const TrainConfig& config,
                    std::mt19937_64& rng);

double value_loss(const nn::MlpParams& net, const Eigen::MatrixXd& observations,
                  std::span<const double> targets);

struct IterationMetrics {
  int iteration = 0;
  double avg_episode_return = 0.0;
  double avg_episode_extrinsic_cost = 0.0;
  double avg_episode_total_cost = 0.0;
  double cost_rate = 0.0;
  double lambda = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  Agent agent;
  std::vector<IterationMetrics> metrics;
  std::vector<CpoDiagnostics> cpo_diagnostics;  // CPO only, one per iteration
  int failed_updates = 0;
};

using IterationCallback = std::function<void(const IterationMetrics&)>;

TrainResult train(Algo algo, const env::WorldConfig& env_config,
                  const cost::CostFn& cost_fn, const TrainConfig& config,
                  std::uint64_t seed,
                  const IterationCallback& on_iteration = {});

struct EvalResult {
  double mean_return = 0.0;
  double mean_extrinsic_cost = 0.0;
  std::vector<EpisodeStats> episodes;
};

// Stochastic (sampled) or deterministic (mean-action) evaluation episodes.
EvalResult evaluate_policy(const nn::GaussianPolicy& policy,
                           const env::WorldConfig& env_config, int episodes,
                           std::uint64_t seed, bool deterministic = false);

// Averages over the final `fraction` of iterations (at least one).
double tail_mean(const std::vector<IterationMetrics>& metrics, double fraction,
                 double IterationMetrics::*field);

// iter,avg_ep_ret,avg_ep_cost_ex,avg_ep_cost_total,cost_rate,lambda,kl
std::string metrics_csv_header();
std::string metrics_to_csv(const std::vector<IterationMetrics>& metrics,
                           const std::string& config_hash = "");
std::vector<IterationMetrics> metrics_from_csv(const std::string& text);

}  // namespace autocost::rl

#endif  // AUTOCOST_RL_HPP_
