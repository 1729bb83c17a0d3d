// Acceptance checks, one per criterion: `acceptance --criterion N` prints
// "criterion N: PASS|FAIL ..." and exits nonzero on failure. Without
// --criterion every check runs in order.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "autocost/cost.hpp"
#include "autocost/csv.hpp"
#include "autocost/env.hpp"
#include "autocost/evolution.hpp"
#include "autocost/harness.hpp"
#include "autocost/parallel.hpp"
#include "autocost/rl.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace autocost;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(n, 1u, 8u));
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------- 1
Verdict gradient_exactness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240101);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto net = oracle::random_net(rng, 100);
    worst = std::max(worst, oracle::gradient_relative_error(net, rng));
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 10.0,
          "max relative error " + fmt(worst) + " over 100 nets, " + fmt(t, 3) + " s"};
}

// ---------------------------------------------------------------- 2
Verdict gae_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3), p(0, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(p(rng) * 400);
    std::vector<double> r(n), v(n), values, boot;
    std::vector<std::uint8_t> ends(n);
    for (int t = 0; t < n; ++t) {
      r[t] = u(rng);
      v[t] = u(rng);
      ends[t] = p(rng) < 0.02;
    }
    ends[n - 1] = 1;
    for (int t = 0; t < n; ++t) {
      values.push_back(v[t]);
      if (ends[t]) {
        // True horizon ends bootstrap from zero; truncations from a value.
        boot.push_back(p(rng) < 0.5 ? 0.0 : u(rng));
        values.push_back(boot.back());
      }
    }
    const double gamma = 0.9 + 0.1 * p(rng), lambda = p(rng);
    const auto got = rl::gae(r, values, ends, gamma, lambda);
    const auto want = oracle::brute_force_gae(r, v, boot, ends, gamma, lambda);
    for (int t = 0; t < n; ++t) {
      worst = std::max(worst, std::abs(got.advantages[t] - want.advantages[t]));
      worst = std::max(worst, std::abs(got.returns[t] - want.returns[t]));
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-10 && t < 5.0,
          "max abs error " + fmt(worst) + " over 200 batches, " + fmt(t, 3) + " s"};
}

// ---------------------------------------------------------------- 3
Verdict formula_exactness() {
  // Exact up to double rounding of the decimal inputs.
  constexpr double tol = 1e-12;
  int checked = 0, bad = 0;
  std::string failures;
  auto expect = [&](const char* what, double got, double want) {
    ++checked;
    if (!(std::abs(got - want) <= tol)) {
      ++bad;
      failures += std::string(" ") + what + "=" + fmt(got, 17);
    }
  };
  env::WorldState s;
  for (auto [d, want] : {std::pair{0.05, 0.15}, {0.2, 0.0}, {1.0, 0.0}}) {
    s.obstacles = {{d, 0.0}};
    expect("hazard", env::hazard_cost(s, 0.2), want);
  }
  expect("dense(1,0.8)", cost::dense_cost(1.0, 0.8), 0.2);
  expect("dense(0.8,1)", cost::dense_cost(0.8, 1.0), 0.0);
  expect("dense(x,x)", cost::dense_cost(0.7, 0.7), 0.0);
  expect("change(0.8,1)", cost::distance_change_cost(0.8, 1.0), -0.2);
  expect("change(1,0.8)", cost::distance_change_cost(1.0, 0.8), 0.2);
  expect("change(x,x)", cost::distance_change_cost(0.7, 0.7), 0.0);
  expect("indicator(1,0.8)", cost::indicator_change_cost(1.0, 0.8), 1.0);
  expect("indicator(0.8,1)", cost::indicator_change_cost(0.8, 1.0), 0.0);
  expect("indicator(x,x)", cost::indicator_change_cost(0.7, 0.7), 1.0);
  expect("margin(3,0.2,0.5)", cost::margin_cost(0.5, 0.2, 3.0), 0.1);
  expect("margin(d>=kR)", cost::margin_cost(0.6, 0.2, 3.0), 0.0);
  expect("margin(d>kR)", cost::margin_cost(1.5, 0.2, 3.0), 0.0);
  for (double d = 0.0; d <= 0.5; d += 0.01) {
    s.obstacles = {{d, 0.0}};
    expect("margin(k=1)", cost::margin_cost(d, 0.2, 1.0), env::hazard_cost(s, 0.2));
  }
  expect("clip(1.5,+1)", rl::ppo_clip_objective(1.5, 1.0, 0.2), 1.2);
  expect("clip(0.5,-1)", rl::ppo_clip_objective(0.5, -1.0, 0.2), -0.8);
  return {bad == 0, std::to_string(checked - bad) + "/" + std::to_string(checked) +
                        " examples match" + failures};
}

// ---------------------------------------------------------------- 4
Verdict cpo_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1), e(0.5, 3.0);
  const double delta = 0.01;
  double worst = 0.0;
  int cases_seen[5] = {0, 0, 0, 0, 0};
  for (int trial = 0; trial < 16; ++trial) {
    const double a = u(rng) * std::numbers::pi;
    Eigen::Matrix2d rot;
    rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    const Eigen::Matrix2d h =
        rot * Eigen::Vector2d(e(rng), e(rng)).asDiagonal() * rot.transpose();
    const Eigen::Vector2d g(u(rng), u(rng));
    const Eigen::Vector2d b = trial == 0 ? Eigen::Vector2d::Zero() : Eigen::Vector2d(u(rng), u(rng));
    const double c = trial == 0 ? -0.1 : 0.15 * u(rng);
    const auto step = rl::solve_cpo_subproblem(
        g, b, c, [&](const Eigen::VectorXd& v) { return Eigen::VectorXd(h * v); }, delta, 10);
    cases_seen[static_cast<int>(step.optim_case)]++;
    const Eigen::Vector2d want = oracle::cpo_grid_search(g, b, c, h, delta);
    worst = std::max(worst, (step.step - want).norm());
  }

  rl::TrainConfig cfg;
  cfg.iterations = 20;
  const auto run = rl::train(rl::Algo::CPO, env::WorldConfig{}, cost::CostFn::zero(), cfg, 99);
  int accepted = 0;
  double max_kl = 0.0;
  for (const auto& d : run.cpo_diagnostics) {
    if (!d.accepted) continue;
    ++accepted;
    max_kl = std::max(max_kl, d.kl);
  }
  const double t = seconds_since(t0);
  std::string seen;
  for (int k = 0; k < 5; ++k) seen += (k ? "," : "") + std::to_string(cases_seen[k]);
  return {worst < 1e-3 && max_kl <= 1.5 * cfg.trust_region && t < 120.0,
          "grid distance " + fmt(worst) + " (case counts " + seen + "); " +
              std::to_string(accepted) + "/20 steps accepted, max KL " + fmt(max_kl) +
              " vs 1.5*delta " + fmt(1.5 * cfg.trust_region) + "; " + fmt(t, 3) + " s"};
}

// ---------------------------------------------------------------- 5
Verdict intrinsic_contract() {
  const auto arch = cost::intrinsic_architecture();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  int inside = 0;
  double lo = 1, hi = 0;
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXd theta(arch.parameter_count());
    for (auto& v : theta) v = n(rng);
    const nn::MlpParams p(arch, theta);
    std::vector<double> lidar(8);
    for (double& v : lidar) v = u(rng);
    const double c = cost::intrinsic_cost(p, lidar);
    inside += c > 0.0 && c < 1.0;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  return {arch.parameter_count() == 41 && inside == 10000,
          std::to_string(arch.parameter_count()) + " parameters; " + std::to_string(inside) +
              "/10000 outputs in (0,1), range [" + fmt(lo) + ", " + fmt(hi) + "]"};
}

// ---------------------------------------------------------------- 6, 7
struct RunSummary {
  double tail_cost = 0.0;  // final 10% of training iterations
  double tail_return = 0.0;
  double eval_cost = 0.0;  // final policy, 10 episodes
  double eval_return = 0.0;
};

struct Cell {
  std::string label;
  rl::Algo algo;
  cost::CostFn fn;
  double limit;
};

// Trains every cell on `n_seeds` shared seeds of experiment `name`.
std::vector<std::vector<RunSummary>> run_cells(const std::string& name,
                                               const std::vector<Cell>& cells,
                                               int n_seeds, int iterations) {
  std::vector<std::vector<RunSummary>> out(cells.size(), std::vector<RunSummary>(n_seeds));
  const int total = static_cast<int>(cells.size()) * n_seeds;
  parallel_for(total, workers(), [&](int k) {
    const auto& cell = cells[static_cast<std::size_t>(k / n_seeds)];
    const int s = k % n_seeds;
    rl::TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.cost_limit = cell.limit;
    const env::WorldConfig world;
    const auto seed = harness::run_seed(1, name, s);
    const auto t0 = Clock::now();
    const auto run = rl::train(cell.algo, world, cell.fn, cfg, seed);
    const auto ev = rl::evaluate_policy(run.agent.policy, world, 10, seed);
    RunSummary& r = out[static_cast<std::size_t>(k / n_seeds)][static_cast<std::size_t>(s)];
    r.tail_cost = rl::tail_mean(run.metrics, 0.1, &rl::IterationMetrics::avg_episode_extrinsic_cost);
    r.tail_return = rl::tail_mean(run.metrics, 0.1, &rl::IterationMetrics::avg_episode_return);
    r.eval_cost = ev.mean_extrinsic_cost;
    r.eval_return = ev.mean_return;
    std::fprintf(stderr, "  %-28s seed %d: train cost %.4f ret %.2f | eval cost %.4f ret %.2f (%.0f s)\n",
                 cell.label.c_str(), s, r.tail_cost, r.tail_return, r.eval_cost, r.eval_return,
                 seconds_since(t0));
  });
  return out;
}

double mean_of(const std::vector<RunSummary>& v, double RunSummary::*f) {
  double s = 0;
  for (const auto& r : v) s += r.*f;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<RunSummary>& v, double RunSummary::*f) {
  const double m = mean_of(v, f);
  double s = 0;
  for (const auto& r : v) s += (r.*f - m) * (r.*f - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

int count_if(const std::vector<RunSummary>& v, const std::function<bool(const RunSummary&)>& f) {
  return static_cast<int>(std::count_if(v.begin(), v.end(), f));
}

Verdict zero_violation_reproduction() {
  const auto t0 = Clock::now();
  const auto margin = cost::CostFn::margin(3.0);
  const std::vector<Cell> cells = {
      {"PPO", rl::Algo::PPO, cost::CostFn::zero(), 0.0},
      {"PPOLagrangian extrinsic d=0", rl::Algo::PPOLagrangian, cost::CostFn::zero(), 0.0},
      {"CPO extrinsic d=0", rl::Algo::CPO, cost::CostFn::zero(), 0.0},
      {"PPOLagrangian margin3 d=0", rl::Algo::PPOLagrangian, margin, 0.0},
      {"CPO margin3 d=0", rl::Algo::CPO, margin, 0.0},
  };
  const auto res = run_cells("zero_violation", cells, 5, 150);
  const double ppo_return = mean_of(res[0], &RunSummary::eval_return);
  bool pass = true;
  std::string detail = "PPO eval return " + fmt(ppo_return);
  for (int i : {1, 2}) {
    const int positive = count_if(res[i], [](const RunSummary& r) { return r.tail_cost > 0.0; });
    pass = pass && positive >= 4;
    detail += "; " + cells[i].label + ": cost>0 in " + std::to_string(positive) + "/5 (mean " +
              fmt(mean_of(res[i], &RunSummary::tail_cost)) + ")";
  }
  for (int i : {3, 4}) {
    const int zero = count_if(res[i], [](const RunSummary& r) { return r.eval_cost == 0.0; });
    const double ret = mean_of(res[i], &RunSummary::eval_return);
    pass = pass && zero >= 4 && ret >= 0.5 * ppo_return;
    detail += "; " + cells[i].label + ": zero cost in " + std::to_string(zero) +
              "/5, return " + fmt(ret) + " (" + fmt(100 * ret / ppo_return, 3) + "% of PPO)";
  }
  const double t = seconds_since(t0);
  pass = pass && t <= 45 * 60;
  return {pass, detail + "; " + fmt(t / 60, 3) + " min"};
}

Verdict limit_sweep_reproduction() {
  const auto t0 = Clock::now();
  const std::vector<Cell> cells = {
      {"CPO d=0", rl::Algo::CPO, cost::CostFn::zero(), 0.0},
      {"CPO d=-1.0", rl::Algo::CPO, cost::CostFn::zero(), -1.0},
      {"PPOLagrangian d=0", rl::Algo::PPOLagrangian, cost::CostFn::zero(), 0.0},
      {"PPOLagrangian d=-0.1", rl::Algo::PPOLagrangian, cost::CostFn::zero(), -0.1},
  };
  const auto res = run_cells("limits", cells, 5, 150);
  const int zero = count_if(res[1], [](const RunSummary& r) { return r.eval_cost == 0.0; });
  const double ret0 = mean_of(res[0], &RunSummary::eval_return);
  const double ret1 = mean_of(res[1], &RunSummary::eval_return);
  const bool cpo_ok = zero >= 4 && ret1 < ret0;
  const double c0 = mean_of(res[2], &RunSummary::tail_cost);
  const double c1 = mean_of(res[3], &RunSummary::tail_cost);
  const double sd0 = std_of(res[2], &RunSummary::tail_cost);
  const double sd1 = std_of(res[3], &RunSummary::tail_cost);
  const double pooled = std::sqrt(0.5 * (sd0 * sd0 + sd1 * sd1));
  const bool lag_ok = std::abs(c1 - c0) < pooled;
  const double t = seconds_since(t0);
  return {cpo_ok && lag_ok && t <= 30 * 60,
          "CPO d=-1: zero cost in " + std::to_string(zero) + "/5, return " + fmt(ret1) +
              " vs d=0 return " + fmt(ret0) + "; PPOLagrangian cost d=-0.1 " + fmt(c1) +
              " vs d=0 " + fmt(c0) + ", |diff| " + fmt(std::abs(c1 - c0)) + " vs pooled std " +
              fmt(pooled) + "; " + fmt(t / 60, 3) + " min"};
}

// ---------------------------------------------------------------- 8
Verdict evolution_smoke() {
  const auto t0 = Clock::now();
  evolution::EvolutionConfig cfg;  // population 8, 4 stages, 2 seeds, CPO + PPOLagrangian
  int monotone_all = 1, improved = 0, ok_runs = 0;
  std::string detail;
  for (std::uint64_t master = 1; master <= 5; ++master) {
    const auto ts = Clock::now();
    // Best zero-fitness return per stage, for stages already at zero.
    std::vector<double> best_zero_return;
    const auto res = evolution::run_evolution(
        cfg, master, workers(), [&](int, const std::vector<evolution::Candidate>& pop) {
          double r = -std::numeric_limits<double>::infinity();
          for (const auto& c : pop)
            if (c.fitness == 0.0) r = std::max(r, c.mean_return);
          best_zero_return.push_back(r);
        });
    const auto& b = res.best_fitness_per_stage;
    bool monotone = true;
    for (std::size_t s = 1; s < b.size(); ++s) monotone = monotone && b[s] <= b[s - 1];
    // Strict improvement: lower best fitness, or, once the best fitness is
    // already zero, a zero-fitness candidate with a higher return.
    bool strict = b.back() < b.front();
    if (!strict && b.front() == 0.0 && b.back() == 0.0)
      strict = best_zero_return.back() > best_zero_return.front();
    const bool ok = monotone && b.back() <= b.front() && strict;
    monotone_all &= monotone;
    improved += strict;
    ok_runs += ok;
    // Kept for inspection (heatmaps, re-evaluation).
    const auto stem = "c8_master" + std::to_string(master);
    csv::write_file(stem + "_best.json", evolution::best_to_json(res, "acceptance", master));
    csv::write_file(stem + "_history.csv", evolution::history_csv(res.history, "acceptance"));
    std::string stages;
    for (double v : b) stages += (stages.empty() ? "" : " ") + fmt(v);
    std::fprintf(stderr, "  master %llu: best per stage [%s]%s (%.0f s)\n",
                 static_cast<unsigned long long>(master), stages.c_str(),
                 strict ? "" : " no strict improvement", seconds_since(ts));
    detail += "; m" + std::to_string(master) + " [" + stages + "]";
  }
  const double t = seconds_since(t0);
  return {monotone_all && ok_runs >= 4 && t <= 4 * 3600,
          "non-increasing in every run: " + std::string(monotone_all ? "yes" : "no") +
              ", improved in " + std::to_string(improved) + "/5" + detail + "; " +
              fmt(t / 60, 3) + " min"};
}

// ---------------------------------------------------------------- 9
Verdict ablation_identity() {
  env::WorldConfig world;
  world.horizon = 200;
  std::mt19937_64 rng(9);
  rl::TrainConfig tc;
  tc.hidden_sizes = {16};
  const auto agent = rl::make_agent(world.observation_size(), 2, tc, rng);
  std::normal_distribution<double> n(0, 1);
  Eigen::VectorXd theta(41);
  for (auto& v : theta) v = n(rng);
  auto without = cost::CostFn::intrinsic(nn::MlpParams(cost::intrinsic_architecture(), theta));
  without.include_extrinsic = false;

  const auto zero_batch = rl::collect_rollout(agent, world, cost::CostFn::zero(), 2000, rng);
  const auto ablated = rl::collect_rollout(agent, world, without, 2000, rng);
  auto same_bits = [](const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  };
  const bool zero_ok = same_bits(zero_batch.total_cost, zero_batch.extrinsic_cost);
  const bool without_ok = same_bits(ablated.total_cost, ablated.intrinsic_cost);
  std::size_t nonzero = 0;
  for (double c : zero_batch.extrinsic_cost) nonzero += c != 0.0;
  return {zero_ok && without_ok,
          std::string("Zero kind total==extrinsic: ") + (zero_ok ? "bitwise" : "DIFFERS") +
              " (" + std::to_string(zero_batch.size()) + " steps, " + std::to_string(nonzero) +
              " with cost); without-extrinsic total==intrinsic: " +
              (without_ok ? "bitwise" : "DIFFERS") + " (" + std::to_string(ablated.size()) + " steps)"};
}

// ---------------------------------------------------------------- 10
std::vector<std::pair<std::string, std::string>> csv_files(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out.emplace_back(fs::relative(e.path(), root).string(), csv::read_text(e.path().string()));
  std::sort(out.begin(), out.end());
  return out;
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / ("autocost_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "train.cfg");
    f << "name = det\nalgos = PPO, PPOLagrangian, CPO\nseeds = 0, 1\ncost = margin\n"
         "horizon = 100\nsteps_per_iteration = 400\niterations = 4\nhidden_sizes = 16\n"
         "eval_episodes = 2\n";
  }
  {
    std::ofstream f(dir / "evolve.cfg");
    f << "name = det_evo\npopulation_size = 3\ntop_fraction = 0.34\nn_stages = 2\neval_seeds = 1\n"
         "horizon = 100\ninner_steps_per_iteration = 200\ninner_iterations = 2\nhidden_sizes = 8\n";
  }
  const std::string cli = std::string("\"") + AUTOCOST_CLI_PATH + "\"";
  int status = 0;
  for (const char* run : {"a", "b"}) {
    const std::string w = std::string(run) == "a" ? "1" : "3";
    const std::string out = (dir / run).string();
    for (const char* verb : {"train", "evolve"}) {
      const std::string cmd = cli + " " + verb + " --config \"" + (dir / (std::string(verb) + ".cfg")).string() +
                              "\" --seed 42 --workers " + w + " --out \"" + out + "\" > /dev/null 2>&1";
      status |= std::system(cmd.c_str());
    }
  }
  const auto a = csv_files(dir / "a"), b = csv_files(dir / "b");
  bool same = status == 0 && !a.empty() && a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i] == b[i];
  fs::remove_all(dir);
  return {same, std::to_string(a.size()) + " CSV files from train+evolve, " +
                    (same ? "byte-identical across reruns (workers 1 vs 3)" : "MISMATCH or CLI failure")};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  const std::vector<std::function<Verdict()>> checks = {
      gradient_exactness,          gae_oracle,               formula_exactness,
      cpo_oracle,                  intrinsic_contract,       zero_violation_reproduction,
      limit_sweep_reproduction,    evolution_smoke,          ablation_identity,
      determinism};
  if (only < 0 || only > static_cast<int>(checks.size())) {
    std::fprintf(stderr, "criterion must be 1..%zu\n", checks.size());
    return 2;
  }
  int failed = 0;
  for (int k = 1; k <= static_cast<int>(checks.size()); ++k) {
    if (only && k != only) continue;
    Verdict v;
    try {
      v = checks[static_cast<std::size_t>(k - 1)]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s %s\n", k, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
