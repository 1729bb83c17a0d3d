#include "autocost/rl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "autocost/csv.hpp"
#include "autocost/errors.hpp"
#include "autocost/seeding.hpp"

namespace autocost::rl {

namespace {

constexpr double kEps = 1e-8;

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

template <typename F>
double episode_mean(const std::vector<EpisodeStats>& eps, F field) {
  if (eps.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : eps) total += field(e);
  return total / static_cast<double>(eps.size());
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m,
                               std::span<const int> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(idx[k]);
  return out;
}

std::vector<double> gather(std::span<const double> v, std::span<const int> idx) {
  std::vector<double> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[static_cast<std::size_t>(idx[k])];
  return out;
}

// d/dtheta of sum_j w_j log pi(a_j|s_j), given the mean-net forward pass.
Eigen::VectorXd log_prob_gradient_from_cache(const nn::GaussianPolicy& policy,
                                             const nn::ForwardCache& cache,
                                             const Eigen::MatrixXd& means,
                                             const Eigen::MatrixXd& actions,
                                             std::span<const double> weights) {
  const Eigen::ArrayXd inv_var = (-2.0 * policy.log_std.array()).exp();
  const Eigen::ArrayXXd diff = (actions - means).array();
  Eigen::Map<const Eigen::ArrayXd> w(weights.data(),
                                     static_cast<Eigen::Index>(weights.size()));
  Eigen::MatrixXd upstream =
      ((diff.colwise() * inv_var).rowwise() * w.transpose()).matrix();
  Eigen::VectorXd grad(policy.parameter_count());
  const Eigen::Index n_mean = policy.mean_net.values.size();
  grad.head(n_mean) = nn::backward_batch(policy.mean_net, cache, upstream);
  const Eigen::ArrayXXd standardized_sq = diff.square().colwise() * inv_var;
  grad.tail(policy.log_std.size()) =
      ((standardized_sq - 1.0).rowwise() * w.transpose()).rowwise().sum().matrix();
  return grad;
}

void require_same_length(std::size_t n, std::span<const double> v,
                         const char* what) {
  if (v.size() != n)
    throw ContractError(std::string(what) + ": length mismatch");
}

}  // namespace

std::string to_string(Algo algo) {
  switch (algo) {
    case Algo::PPO:
      return "PPO";
    case Algo::PPOLagrangian:
      return "PPOLagrangian";
    case Algo::CPO:
      return "CPO";
  }
  return "?";
}

Algo parse_algo(const std::string& text) {
  if (text == "PPO" || text == "ppo") return Algo::PPO;
  if (text == "PPOLagrangian" || text == "ppo_lagrangian" ||
      text == "PPO-Lagrangian")
    return Algo::PPOLagrangian;
  if (text == "CPO" || text == "cpo") return Algo::CPO;
  throw ConfigError("unknown algorithm '" + text + "'");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("train config: " + msg);
  };
  require(steps_per_iteration >= 1, "steps_per_iteration must be >= 1");
  require(iterations >= 1, "iterations must be >= 1");
  require(gamma >= 0 && gamma <= 1, "gamma must be in [0, 1]");
  require(lambda_gae >= 0 && lambda_gae <= 1, "lambda_gae must be in [0, 1]");
  require(clip_eps > 0, "clip_eps must be > 0");
  require(target_kl > 0, "target_kl must be > 0");
  require(policy_lr > 0 && value_lr > 0, "learning rates must be > 0");
  require(lambda_init >= 0, "lambda_init must be >= 0");
  require(lambda_lr >= 0, "lambda_lr must be >= 0");
  require(cg_damping >= 0, "cg_damping must be >= 0");
  require(cg_iters >= 1, "cg_iters must be >= 1");
  require(backtrack_steps >= 1, "backtrack_steps must be >= 1");
  require(backtrack_coeff > 0 && backtrack_coeff < 1,
          "backtrack_coeff must be in (0, 1)");
  require(trust_region > 0, "trust_region must be > 0");
  require(policy_epochs >= 1 && value_epochs >= 1, "epochs must be >= 1");
  require(minibatch_size >= 1, "minibatch_size must be >= 1");
  require(!hidden_sizes.empty(), "hidden_sizes must be nonempty");
  for (int h : hidden_sizes) require(h >= 1, "hidden sizes must be >= 1");
}

double TrajectoryBatch::mean_episode_return() const {
  return episode_mean(episodes, [](const EpisodeStats& e) { return e.ret; });
}
double TrajectoryBatch::mean_episode_extrinsic_cost() const {
  return episode_mean(episodes,
                      [](const EpisodeStats& e) { return e.cost_extrinsic; });
}
double TrajectoryBatch::mean_episode_total_cost() const {
  return episode_mean(episodes,
                      [](const EpisodeStats& e) { return e.cost_total; });
}
double TrajectoryBatch::mean_episode_length() const {
  return episode_mean(episodes, [](const EpisodeStats& e) {
    return static_cast<double>(e.length);
  });
}
double TrajectoryBatch::cost_rate() const {
  if (violation.empty()) return 0.0;
  const auto n = std::count(violation.begin(), violation.end(), 1);
  return static_cast<double>(n) / static_cast<double>(violation.size());
}

Agent make_agent(int obs_size, int action_size, const TrainConfig& config,
                 std::mt19937_64& rng) {
  Agent agent;
  agent.policy = nn::make_policy(obs_size, action_size, config.hidden_sizes,
                                 rng, config.init_log_std);
  agent.policy_optimizer = nn::Adam(config.policy_lr);
  nn::Architecture critic_arch;
  critic_arch.layer_sizes.push_back(obs_size);
  critic_arch.layer_sizes.insert(critic_arch.layer_sizes.end(),
                                 config.hidden_sizes.begin(),
                                 config.hidden_sizes.end());
  critic_arch.layer_sizes.push_back(1);
  critic_arch.hidden_activation = nn::Activation::Tanh;
  critic_arch.output_activation = nn::Activation::Identity;
  agent.reward_critic = {
      nn::init_orthogonal(critic_arch, rng, std::sqrt(2.0), 1.0),
      nn::Adam(config.value_lr)};
  agent.cost_critic = {
      nn::init_orthogonal(critic_arch, rng, std::sqrt(2.0), 1.0),
      nn::Adam(config.value_lr)};
  agent.lagrange_multiplier = config.lambda_init;
  return agent;
}

TrajectoryBatch collect_rollout(const Agent& agent,
                                const env::WorldConfig& env_config,
                                const cost::CostFn& cost_fn, int n_steps,
                                std::mt19937_64& rng) {
  if (n_steps < env_config.horizon)
    throw ContractError("collect_rollout: n_steps must be >= horizon");
  const int horizon = env_config.horizon;
  const int n_episodes = (n_steps + horizon - 1) / horizon;
  const Eigen::Index total = static_cast<Eigen::Index>(n_episodes) * horizon;
  const int obs_size = env_config.observation_size();
  const auto& policy = agent.policy;
  const int act_size = policy.action_size();
  if (policy.observation_size() != obs_size)
    throw ContractError("policy input size does not match the environment");

  TrajectoryBatch batch;
  batch.observations.resize(obs_size, total);
  batch.actions.resize(act_size, total);
  for (auto* v : {&batch.rewards, &batch.extrinsic_cost, &batch.intrinsic_cost,
                  &batch.total_cost, &batch.log_prob_old})
    v->reserve(static_cast<std::size_t>(total));
  batch.episode_end.reserve(static_cast<std::size_t>(total));
  batch.violation.reserve(static_cast<std::size_t>(total));

  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::VectorXd stddev = policy.log_std.array().exp().matrix();
  env::Environment world(env_config);
  Eigen::Index t = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    const env::Observation* obs = &world.reset(rng());
    EpisodeStats stats;
    while (!world.done()) {
      const Eigen::VectorXd x = obs->flatten();
      const Eigen::VectorXd mean = nn::forward(policy.mean_net, x);
      Eigen::VectorXd a = mean;
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += stddev[i] * normal(rng);
      const double logp = nn::gaussian_log_density(mean, policy.log_std, a);
      const env::StepResult& step = world.step({a[0], a.size() > 1 ? a[1] : 0.0});
      const auto features = cost::features_from_step(env_config, step);
      const double intrinsic = cost_fn.value(features);
      const double total = cost::total_cost(step.extrinsic_cost, cost_fn, features);

      batch.observations.col(t) = x;
      batch.actions.col(t) = a;
      batch.rewards.push_back(step.reward);
      batch.extrinsic_cost.push_back(step.extrinsic_cost);
      batch.intrinsic_cost.push_back(intrinsic);
      batch.total_cost.push_back(total);
      batch.log_prob_old.push_back(logp);
      batch.episode_end.push_back(step.done ? 1 : 0);
      batch.violation.push_back(step.violation ? 1 : 0);

      stats.ret += step.reward;
      stats.cost_extrinsic += step.extrinsic_cost;
      stats.cost_total += total;
      stats.length += 1;
      stats.violations += step.violation ? 1 : 0;
      stats.goals += step.info.goal_achieved ? 1 : 0;
      obs = &step.observation;
      ++t;
    }
    batch.episodes.push_back(stats);
  }

  const Eigen::MatrixXd vr = nn::forward_batch(agent.reward_critic.net, batch.observations);
  const Eigen::MatrixXd vc = nn::forward_batch(agent.cost_critic.net, batch.observations);
  batch.reward_value_pred.assign(vr.data(), vr.data() + vr.size());
  batch.cost_value_pred.assign(vc.data(), vc.data() + vc.size());
  return batch;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> episode_end, double gamma,
              double lambda) {
  const std::size_t n = rewards.size();
  if (episode_end.size() != n) throw ContractError("gae: boundary length mismatch");
  const auto n_ends = static_cast<std::size_t>(
      std::count_if(episode_end.begin(), episode_end.end(),
                    [](std::uint8_t e) { return e != 0; }));
  if (values.size() != n + n_ends)
    throw ContractError("gae: values need one bootstrap entry per episode end");
  if (n > 0 && !episode_end[n - 1])
    throw ContractError("gae: the last step must end an episode");

  std::vector<std::size_t> value_index(n);
  std::size_t offset = 0;
  for (std::size_t t = 0; t < n; ++t) {
    value_index[t] = t + offset;
    if (episode_end[t]) ++offset;
  }

  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    if (episode_end[k]) running = 0.0;
    const double v = values[value_index[k]];
    const double v_next = values[value_index[k] + 1];
    const double delta = rewards[k] + gamma * v_next - v;
    running = delta + gamma * lambda * running;
    out.advantages[k] = running;
    out.returns[k] = running + v;
  }
  return out;
}

std::vector<double> with_bootstrap(std::span<const double> values,
                                   std::span<const std::uint8_t> episode_end,
                                   double bootstrap) {
  if (values.size() != episode_end.size())
    throw ContractError("with_bootstrap: length mismatch");
  std::vector<double> out;
  out.reserve(values.size() + values.size() / 16 + 1);
  for (std::size_t t = 0; t < values.size(); ++t) {
    out.push_back(values[t]);
    if (episode_end[t]) out.push_back(bootstrap);
  }
  return out;
}

std::vector<double> normalize_advantages(std::span<const double> adv) {
  const double mean = mean_of(adv);
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= std::max<std::size_t>(adv.size(), 1);
  const double scale = 1.0 / (std::sqrt(var) + kEps);
  std::vector<double> out(adv.size());
  for (std::size_t i = 0; i < adv.size(); ++i) out[i] = (adv[i] - mean) * scale;
  return out;
}

std::vector<double> center_advantages(std::span<const double> adv) {
  const double mean = mean_of(adv);
  std::vector<double> out(adv.size());
  for (std::size_t i = 0; i < adv.size(); ++i) out[i] = adv[i] - mean;
  return out;
}

double ppo_clip_objective(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

Eigen::VectorXd weighted_log_prob_gradient(const nn::GaussianPolicy& policy,
                                           const Eigen::MatrixXd& observations,
                                           const Eigen::MatrixXd& actions,
                                           std::span<const double> weights) {
  require_same_length(static_cast<std::size_t>(observations.cols()), weights,
                      "weighted_log_prob_gradient");
  nn::ForwardCache cache;
  const Eigen::MatrixXd means =
      nn::forward_batch(policy.mean_net, observations, &cache);
  return log_prob_gradient_from_cache(policy, cache, means, actions, weights);
}

Eigen::VectorXd clipped_surrogate_gradient(const nn::GaussianPolicy& policy,
                                           const Eigen::MatrixXd& observations,
                                           const Eigen::MatrixXd& actions,
                                           std::span<const double> log_prob_old,
                                           std::span<const double> advantages,
                                           double clip_eps, double* objective) {
  const auto n = static_cast<std::size_t>(observations.cols());
  require_same_length(n, log_prob_old, "clipped_surrogate_gradient");
  require_same_length(n, advantages, "clipped_surrogate_gradient");
  nn::ForwardCache cache;
  const Eigen::MatrixXd means =
      nn::forward_batch(policy.mean_net, observations, &cache);
  const Eigen::VectorXd logp = nn::log_prob_batch(means, policy.log_std, actions);
  std::vector<double> weights(n);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = std::exp(logp[static_cast<Eigen::Index>(i)] - log_prob_old[i]);
    const double a = advantages[i];
    total += ppo_clip_objective(ratio, a, clip_eps);
    // The unclipped branch carries the gradient; the clipped one is flat.
    const bool unclipped =
        (a >= 0.0 && ratio <= 1.0 + clip_eps) || (a < 0.0 && ratio >= 1.0 - clip_eps);
    weights[i] = unclipped ? ratio * a * inv_n : 0.0;
  }
  if (objective) *objective = total * inv_n;
  return log_prob_gradient_from_cache(policy, cache, means, actions, weights);
}

PpoResult ppo_update(const nn::GaussianPolicy& policy, nn::Adam& optimizer,
                     const TrajectoryBatch& batch,
                     std::span<const double> advantages,
                     const TrainConfig& config, std::mt19937_64& rng) {
  const auto n = batch.size();
  require_same_length(n, advantages, "ppo_update");
  const Eigen::MatrixXd old_means =
      nn::forward_batch(policy.mean_net, batch.observations);
  const Eigen::VectorXd old_log_std = policy.log_std;

  PpoResult result{policy, 0.0, 0, false};
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(config.minibatch_size);

  for (int epoch = 0; epoch < config.policy_epochs; ++epoch) {
    const nn::GaussianPolicy snapshot = result.policy;
    const double snapshot_kl = result.achieved_kl;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      std::span<const int> idx(order.data() + start, end - start);
      const Eigen::MatrixXd obs = gather_columns(batch.observations, idx);
      const Eigen::MatrixXd act = gather_columns(batch.actions, idx);
      const auto logp_old = gather(batch.log_prob_old, idx);
      const auto adv = gather(advantages, idx);
      double objective = 0.0;
      const Eigen::VectorXd grad = clipped_surrogate_gradient(
          result.policy, obs, act, logp_old, adv, config.clip_eps, &objective);
      if (!std::isfinite(objective) || !grad.allFinite())
        throw NumericalError("ppo: non-finite surrogate loss");
      Eigen::VectorXd theta = result.policy.flat();
      optimizer.step(theta, -grad);
      result.policy = result.policy.with_flat(theta);
    }
    result.epochs = epoch + 1;
    const double kl_now =
        nn::mean_kl(old_means, old_log_std,
                    nn::forward_batch(result.policy.mean_net, batch.observations),
                    result.policy.log_std);
    if (!std::isfinite(kl_now)) throw NumericalError("ppo: non-finite KL");
    if (kl_now > 2.0 * config.target_kl) {
      // Overshot within one epoch: keep the last policy inside the bound.
      result.policy = snapshot;
      result.achieved_kl = snapshot_kl;
      result.early_stopped = true;
      break;
    }
    result.achieved_kl = kl_now;
    if (kl_now > config.target_kl) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

double update_lagrange_multiplier(double lambda, double episode_cost,
                                  double limit, double lr) {
  return std::max(0.0, lambda + lr * (episode_cost - limit));
}

LagrangianResult lagrangian_update(const nn::GaussianPolicy& policy,
                                   nn::Adam& optimizer, double lambda,
                                   const TrajectoryBatch& batch,
                                   std::span<const double> reward_adv,
                                   std::span<const double> cost_adv,
                                   const TrainConfig& config,
                                   std::mt19937_64& rng) {
  const auto n = batch.size();
  require_same_length(n, reward_adv, "lagrangian_update");
  require_same_length(n, cost_adv, "lagrangian_update");
  const double new_lambda = update_lagrange_multiplier(
      lambda, batch.mean_episode_total_cost(), config.cost_limit,
      config.lambda_lr);
  std::vector<double> combined(n);
  const double scale = 1.0 / (1.0 + new_lambda);
  for (std::size_t i = 0; i < n; ++i)
    combined[i] = (reward_adv[i] - new_lambda * cost_adv[i]) * scale;
  auto ppo = ppo_update(policy, optimizer, batch, combined, config, rng);
  return {std::move(ppo.policy), new_lambda, ppo.achieved_kl};
}

CgResult conjugate_gradient(const LinearOperator& apply,
                            const Eigen::VectorXd& rhs, int iters,
                            double tolerance) {
  CgResult out;
  out.x = Eigen::VectorXd::Zero(rhs.size());
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = rhs;
  double rr = r.squaredNorm();
  const double start = rr;
  for (int k = 0; k < iters && rr > tolerance; ++k) {
    const Eigen::VectorXd ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;  // lost positive curvature
    const double alpha = rr / pap;
    out.x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  out.residual = std::sqrt(rr);
  out.converged = out.x.allFinite() && (rr <= tolerance || rr < start);
  return out;
}

CpoStep solve_cpo_subproblem(const Eigen::VectorXd& g, const Eigen::VectorXd& b,
                             double c, const LinearOperator& hvp, double delta,
                             int cg_iters) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  CpoStep out;
  auto cg_g = conjugate_gradient(hvp, g, cg_iters);
  Eigen::VectorXd v = cg_g.x;  // H^-1 g
  if (!cg_g.converged) {
    v = g;
    out.cg_converged = false;
  }
  const Eigen::VectorXd hv = hvp(v);
  const double q = v.dot(hv);

  if (b.squaredNorm() <= 1e-8 && c < 0) {
    out.optim_case = CpoCase::NoCostGradient;
    out.lambda = std::sqrt(q / (2.0 * delta));
    out.step = v / (out.lambda + kEps);
    return out;
  }

  auto cg_b = conjugate_gradient(hvp, b, cg_iters);
  Eigen::VectorXd w = cg_b.x;  // H^-1 b
  if (!cg_b.converged) {
    w = b;
    out.cg_converged = false;
  }
  const double r = w.dot(hv);  // b' H^-1 g
  const double s = w.dot(hvp(w));  // b' H^-1 b
  if (s <= 1e-16) {
    // Cost gradient vanishes: nothing to trade off against.
    out.optim_case = c < 0 ? CpoCase::NoCostGradient : CpoCase::Recovery;
    if (c < 0) {
      out.lambda = std::sqrt(q / (2.0 * delta));
      out.step = v / (out.lambda + kEps);
    } else {
      out.step = Eigen::VectorXd::Zero(g.size());
    }
    return out;
  }
  const double A = q - r * r / s;
  const double B = 2.0 * delta - c * c / s;

  if (c < 0 && B < 0) {
    out.optim_case = CpoCase::AllFeasible;
  } else if (c < 0 && B >= 0) {
    out.optim_case = CpoCase::MostlyFeasible;
  } else if (c >= 0 && B >= 0) {
    out.optim_case = CpoCase::PartlyFeasible;
  } else {
    out.optim_case = CpoCase::Recovery;
  }

  if (out.optim_case == CpoCase::Recovery) {
    out.nu = std::sqrt(2.0 * delta / (s + kEps));
    out.step = -out.nu * w;
    return out;
  }
  if (out.optim_case == CpoCase::AllFeasible) {
    out.lambda = std::sqrt(q / (2.0 * delta));
    out.step = v / (out.lambda + kEps);
    return out;
  }

  // nu(lambda) = max(0, lambda c + r) / s splits lambda >= 0 into the set
  // where the linear constraint is active (a) and where it is not (b).
  double lo_a = 0, hi_a = kInf, lo_b = 0, hi_b = kInf;
  bool has_a = true, has_b = true;
  if (c > 0) {
    lo_a = std::max(0.0, -r / c);
    hi_b = lo_a;
  } else if (c < 0) {
    hi_a = std::max(0.0, -r / c);
    lo_b = hi_a;
  } else if (r > 0) {
    has_b = false;
  } else {
    has_a = false;
  }
  auto proj = [](double x, double lo, double hi) {
    return std::max(lo, std::min(hi, x));
  };
  auto f_a = [&](double lam) {
    return -0.5 * (A / (lam + kEps) + B * lam) + r * c / s;
  };
  auto f_b = [&](double lam) {
    return -0.5 * (q / (lam + kEps) + 2.0 * delta * lam);
  };
  const double lam_a = has_a ? proj(std::sqrt(std::max(A, 0.0) / std::max(B, kEps)), lo_a, hi_a) : 0.0;
  const double lam_b = has_b ? proj(std::sqrt(q / (2.0 * delta)), lo_b, hi_b) : 0.0;
  double lam = 0.0;
  if (has_a && has_b) {
    lam = f_a(lam_a) >= f_b(lam_b) ? lam_a : lam_b;
  } else {
    lam = has_a ? lam_a : lam_b;
  }
  out.lambda = lam;
  out.nu = std::max(0.0, lam * c + r) / s;
  out.step = (v - out.nu * w) / (lam + kEps);
  return out;
}

LinearOperator fisher_vector_product(const nn::GaussianPolicy& policy,
                                     const Eigen::MatrixXd& observations,
                                     double damping) {
  auto cache = std::make_shared<nn::ForwardCache>();
  nn::forward_batch(policy.mean_net, observations, cache.get());
  const Eigen::ArrayXd inv_var = (-2.0 * policy.log_std.array()).exp();
  const double inv_n = 1.0 / static_cast<double>(std::max<Eigen::Index>(observations.cols(), 1));
  const Eigen::Index n_mean = policy.mean_net.values.size();
  const Eigen::Index n_std = policy.log_std.size();
  nn::MlpParams net = policy.mean_net;
  return [cache, inv_var, inv_n, n_mean, n_std, net = std::move(net),
          damping](const Eigen::VectorXd& v) {
    const Eigen::MatrixXd jv = nn::jvp_batch(net, *cache, v.head(n_mean));
    const Eigen::MatrixXd up = ((jv.array().colwise() * inv_var) * inv_n).matrix();
    Eigen::VectorXd out(v.size());
    out.head(n_mean) = nn::backward_batch(net, *cache, up);
    out.tail(n_std) = 2.0 * v.tail(n_std);
    out += damping * v;
    return out;
  };
}

CpoResult cpo_update(const nn::GaussianPolicy& policy,
                     const TrajectoryBatch& batch,
                     std::span<const double> reward_adv,
                     std::span<const double> cost_adv, double episode_cost,
                     const TrainConfig& config) {
  const auto n = batch.size();
  require_same_length(n, reward_adv, "cpo_update");
  require_same_length(n, cost_adv, "cpo_update");
  CpoResult result{policy, {}};
  auto& diag = result.diagnostics;

  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));
  std::vector<double> wr(n), wc(n);
  for (std::size_t i = 0; i < n; ++i) {
    wr[i] = reward_adv[i] * inv_n;
    wc[i] = cost_adv[i] * inv_n;
  }
  nn::ForwardCache cache;
  const Eigen::MatrixXd old_means =
      nn::forward_batch(policy.mean_net, batch.observations, &cache);
  const Eigen::VectorXd g =
      log_prob_gradient_from_cache(policy, cache, old_means, batch.actions, wr);
  const Eigen::VectorXd b =
      log_prob_gradient_from_cache(policy, cache, old_means, batch.actions, wc);
  if (!g.allFinite() || !b.allFinite())
    throw NumericalError("cpo: non-finite policy gradient");

  const double ep_len = std::max(batch.mean_episode_length(), 1.0);
  const double c = (episode_cost - config.cost_limit) / ep_len;
  diag.constraint_slack = c;

  const auto hvp =
      fisher_vector_product(policy, batch.observations, config.cg_damping);
  const CpoStep sub = solve_cpo_subproblem(g, b, c, hvp, config.trust_region,
                                           config.cg_iters);
  diag.optim_case = sub.optim_case;
  diag.cg_converged = sub.cg_converged;
  if (!sub.cg_converged)
    diag.warning = "conjugate gradient did not converge; used plain gradient";
  if (!sub.step.allFinite()) {
    diag.warning = "non-finite CPO step; update skipped";
    return result;
  }

  const double surr_r_old = mean_of(reward_adv);
  const double surr_c_old = mean_of(cost_adv);
  const Eigen::VectorXd theta = policy.flat();
  const Eigen::VectorXd logp_old = nn::log_prob_batch(old_means, policy.log_std,
                                                      batch.actions);
  const bool check_reward = sub.optim_case > CpoCase::PartlyFeasible;
  double frac = 1.0;
  for (int j = 0; j < config.backtrack_steps; ++j, frac *= config.backtrack_coeff) {
    const nn::GaussianPolicy cand = policy.with_flat(theta + frac * sub.step);
    const Eigen::MatrixXd means = nn::forward_batch(cand.mean_net, batch.observations);
    const double kl_val = nn::mean_kl(old_means, policy.log_std, means, cand.log_std);
    const Eigen::VectorXd logp = nn::log_prob_batch(means, cand.log_std, batch.actions);
    double surr_r = 0.0, surr_c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double ratio = std::exp(logp[k] - logp_old[k]);
      surr_r += ratio * reward_adv[i];
      surr_c += ratio * cost_adv[i];
    }
    surr_r *= inv_n;
    surr_c *= inv_n;
    const bool ok = std::isfinite(kl_val) && std::isfinite(surr_r) &&
                    std::isfinite(surr_c) && kl_val <= config.trust_region &&
                    (!check_reward || surr_r >= surr_r_old) &&
                    surr_c - surr_c_old <= std::max(-c, 0.0);
    if (ok) {
      result.policy = cand;
      diag.accepted = true;
      diag.backtracks = j;
      diag.kl = kl_val;
      return result;
    }
  }
  diag.backtracks = config.backtrack_steps;
  if (diag.warning.empty()) diag.warning = "line search failed; step rejected";
  return result;
}

double value_loss(const nn::MlpParams& net, const Eigen::MatrixXd& observations,
                  std::span<const double> targets) {
  require_same_length(static_cast<std::size_t>(observations.cols()), targets,
                      "value_loss");
  const Eigen::MatrixXd pred = nn::forward_batch(net, observations);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = pred(0, static_cast<Eigen::Index>(i)) - targets[i];
    total += d * d;
  }
  return targets.empty() ? 0.0 : total / static_cast<double>(targets.size());
}

Critic value_update(const Critic& critic, const Eigen::MatrixXd& observations,
                    std::span<const double> targets, const TrainConfig& config,
                    std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(observations.cols());
  require_same_length(n, targets, "value_update");
  Critic out = critic;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(config.minibatch_size);
  for (int epoch = 0; epoch < config.value_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      std::span<const int> idx(order.data() + start, end - start);
      const Eigen::MatrixXd obs = gather_columns(observations, idx);
      nn::ForwardCache cache;
      const Eigen::MatrixXd pred = nn::forward_batch(out.net, obs, &cache);
      Eigen::MatrixXd up(1, static_cast<Eigen::Index>(idx.size()));
      const double scale = 2.0 / static_cast<double>(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        up(0, kk) = scale * (pred(0, kk) - targets[static_cast<std::size_t>(idx[k])]);
      }
      const Eigen::VectorXd grad = nn::backward_batch(out.net, cache, up);
      if (!grad.allFinite()) throw NumericalError("value: non-finite gradient");
      out.optimizer.step(out.net.values, grad);
    }
  }
  return out;
}

TrainResult train(Algo algo, const env::WorldConfig& env_config,
                  const cost::CostFn& cost_fn, const TrainConfig& config,
                  std::uint64_t seed, const IterationCallback& on_iteration) {
  config.validate();
  env_config.validate();
  if (config.steps_per_iteration < env_config.horizon)
    throw ConfigError("steps_per_iteration must be >= the episode horizon");

  std::mt19937_64 rng(derive_seed(seed, "train", static_cast<std::uint64_t>(algo)));
  TrainResult result;
  result.agent = make_agent(env_config.observation_size(), 2, config, rng);
  Agent& agent = result.agent;
  const bool constrained = algo != Algo::PPO;

  for (int it = 0; it < config.iterations; ++it) {
    const TrajectoryBatch batch =
        collect_rollout(agent, env_config, cost_fn, config.steps_per_iteration, rng);
    const auto reward_gae =
        gae(batch.rewards, with_bootstrap(batch.reward_value_pred, batch.episode_end),
            batch.episode_end, config.gamma, config.lambda_gae);
    const auto reward_adv = normalize_advantages(reward_gae.advantages);
    GaeResult cost_gae;
    std::vector<double> cost_adv;
    if (constrained) {
      cost_gae = gae(batch.total_cost,
                     with_bootstrap(batch.cost_value_pred, batch.episode_end),
                     batch.episode_end, config.gamma, config.lambda_gae);
      cost_adv = center_advantages(cost_gae.advantages);
    }

    IterationMetrics m;
    m.iteration = it;
    m.avg_episode_return = batch.mean_episode_return();
    m.avg_episode_extrinsic_cost = batch.mean_episode_extrinsic_cost();
    m.avg_episode_total_cost = batch.mean_episode_total_cost();
    m.cost_rate = batch.cost_rate();

    try {
      switch (algo) {
        case Algo::PPO: {
          auto r = ppo_update(agent.policy, agent.policy_optimizer, batch,
                              reward_adv, config, rng);
          agent.policy = std::move(r.policy);
          m.kl = r.achieved_kl;
          break;
        }
        case Algo::PPOLagrangian: {
          auto r = lagrangian_update(agent.policy, agent.policy_optimizer,
                                     agent.lagrange_multiplier, batch,
                                     reward_adv, cost_adv, config, rng);
          agent.policy = std::move(r.policy);
          agent.lagrange_multiplier = r.lambda;
          m.kl = r.achieved_kl;
          break;
        }
        case Algo::CPO: {
          auto r = cpo_update(agent.policy, batch, reward_adv, cost_adv,
                              batch.mean_episode_total_cost(), config);
          agent.policy = std::move(r.policy);
          m.kl = r.diagnostics.kl;
          result.cpo_diagnostics.push_back(r.diagnostics);
          break;
        }
      }
    } catch (const NumericalError&) {
      ++result.failed_updates;
    }
    if (!agent.policy.flat().allFinite())
      throw NumericalError("policy parameters became non-finite");
    m.lambda = algo == Algo::PPOLagrangian ? agent.lagrange_multiplier : 0.0;

    agent.reward_critic = value_update(agent.reward_critic, batch.observations,
                                       reward_gae.returns, config, rng);
    if (constrained) {
      agent.cost_critic = value_update(agent.cost_critic, batch.observations,
                                       cost_gae.returns, config, rng);
    }
    result.metrics.push_back(m);
    if (on_iteration) on_iteration(m);
  }
  return result;
}

EvalResult evaluate_policy(const nn::GaussianPolicy& policy,
                           const env::WorldConfig& env_config, int episodes,
                           std::uint64_t seed, bool deterministic) {
  EvalResult out;
  std::mt19937_64 rng(derive_seed(seed, "evaluate", 0));
  env::Environment world(env_config);
  for (int ep = 0; ep < episodes; ++ep) {
    const env::Observation* obs = &world.reset(rng());
    EpisodeStats stats;
    while (!world.done()) {
      const Eigen::VectorXd x = obs->flatten();
      const Eigen::VectorXd a = deterministic ? nn::forward(policy.mean_net, x)
                                              : nn::sample(policy, x, rng);
      const auto& step = world.step({a[0], a.size() > 1 ? a[1] : 0.0});
      stats.ret += step.reward;
      stats.cost_extrinsic += step.extrinsic_cost;
      stats.length += 1;
      stats.violations += step.violation ? 1 : 0;
      stats.goals += step.info.goal_achieved ? 1 : 0;
      obs = &step.observation;
    }
    out.episodes.push_back(stats);
  }
  out.mean_return = episode_mean(out.episodes, [](const EpisodeStats& e) { return e.ret; });
  out.mean_extrinsic_cost = episode_mean(
      out.episodes, [](const EpisodeStats& e) { return e.cost_extrinsic; });
  return out;
}

double tail_mean(const std::vector<IterationMetrics>& metrics, double fraction,
                 double IterationMetrics::*field) {
  if (metrics.empty()) return 0.0;
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(metrics.size()))));
  double total = 0.0;
  for (std::size_t i = metrics.size() - std::min(n, metrics.size()); i < metrics.size(); ++i)
    total += metrics[i].*field;
  return total / static_cast<double>(std::min(n, metrics.size()));
}

std::string metrics_csv_header() {
  return "iter,avg_ep_ret,avg_ep_cost_ex,avg_ep_cost_total,cost_rate,lambda,kl";
}

std::string metrics_to_csv(const std::vector<IterationMetrics>& metrics,
                           const std::string& config_hash) {
  std::string out;
  if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
  out += metrics_csv_header() + "\n";
  for (const auto& m : metrics) {
    out += csv::join({std::to_string(m.iteration),
                      csv::format_double(m.avg_episode_return),
                      csv::format_double(m.avg_episode_extrinsic_cost),
                      csv::format_double(m.avg_episode_total_cost),
                      csv::format_double(m.cost_rate),
                      csv::format_double(m.lambda), csv::format_double(m.kl)});
    out += '\n';
  }
  return out;
}

std::vector<IterationMetrics> metrics_from_csv(const std::string& text) {
  const auto table = csv::parse(text);
  table.require_columns({"iter", "avg_ep_ret", "avg_ep_cost_ex",
                         "avg_ep_cost_total", "cost_rate", "lambda", "kl"});
  std::vector<IterationMetrics> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    IterationMetrics m;
    m.iteration = static_cast<int>(table.number(i, "iter"));
    m.avg_episode_return = table.number(i, "avg_ep_ret");
    m.avg_episode_extrinsic_cost = table.number(i, "avg_ep_cost_ex");
    m.avg_episode_total_cost = table.number(i, "avg_ep_cost_total");
    m.cost_rate = table.number(i, "cost_rate");
    m.lambda = table.number(i, "lambda");
    m.kl = table.number(i, "kl");
    out.push_back(m);
  }
  return out;
}

}  // namespace autocost::rl
