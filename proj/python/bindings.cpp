// Python bindings for the main operations: environment stepping, cost
// functions, GAE, training, heatmaps and evolution.
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "autocost/cost.hpp"
#include "autocost/env.hpp"
#include "autocost/errors.hpp"
#include "autocost/evolution.hpp"
#include "autocost/harness.hpp"
#include "autocost/rl.hpp"
#include "autocost/seeding.hpp"

namespace py = pybind11;
using namespace autocost;

namespace {

py::dict metrics_dict(const rl::IterationMetrics& m) {
  py::dict d;
  d["iter"] = m.iteration;
  d["avg_ep_ret"] = m.avg_episode_return;
  d["avg_ep_cost_ex"] = m.avg_episode_extrinsic_cost;
  d["avg_ep_cost_total"] = m.avg_episode_total_cost;
  d["cost_rate"] = m.cost_rate;
  d["lambda"] = m.lambda;
  d["kl"] = m.kl;
  return d;
}

cost::CostFn make_cost(const std::string& kind, double margin_k,
                       std::optional<std::vector<double>> params,
                       bool include_extrinsic) {
  cost::CostFn fn;
  switch (cost::parse_cost_kind(kind)) {
    case cost::CostKind::Zero: fn = cost::CostFn::zero(); break;
    case cost::CostKind::IntrinsicNet: {
      if (!params) throw ConfigError("intrinsic cost needs params");
      const Eigen::Map<const Eigen::VectorXd> v(params->data(),
                                                static_cast<Eigen::Index>(params->size()));
      fn = cost::CostFn::intrinsic(nn::MlpParams(cost::intrinsic_architecture(), v));
      break;
    }
    case cost::CostKind::Dense: fn = cost::CostFn::dense(); break;
    case cost::CostKind::DistanceChange: fn = cost::CostFn::distance_change(); break;
    case cost::CostKind::IndicatorChange: fn = cost::CostFn::indicator_change(); break;
    case cost::CostKind::Margin: fn = cost::CostFn::margin(margin_k); break;
  }
  fn.include_extrinsic = include_extrinsic;
  return fn;
}

nn::MlpParams intrinsic_params(const std::vector<double>& params) {
  const Eigen::Map<const Eigen::VectorXd> v(params.data(),
                                            static_cast<Eigen::Index>(params.size()));
  return nn::MlpParams(cost::intrinsic_architecture(), v);
}

}  // namespace

PYBIND11_MODULE(_autocost, m) {
  m.doc() = "Safe RL with evolved intrinsic costs";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<env::WorldConfig>(m, "WorldConfig")
      .def(py::init<>())
      .def_property(
          "task", [](const env::WorldConfig& c) { return env::to_string(c.task); },
          [](env::WorldConfig& c, const std::string& s) { c.task = env::parse_task(s); })
      .def_property(
          "constraint", [](const env::WorldConfig& c) { return env::to_string(c.constraint_kind); },
          [](env::WorldConfig& c, const std::string& s) {
            c.constraint_kind = env::parse_constraint_kind(s);
          })
      .def_property(
          "robot", [](const env::WorldConfig& c) { return env::to_string(c.robot_kind); },
          [](env::WorldConfig& c, const std::string& s) { c.robot_kind = env::parse_robot_kind(s); })
      .def_readwrite("n_obstacles", &env::WorldConfig::n_obstacles)
      .def_readwrite("goal_radius", &env::WorldConfig::goal_radius)
      .def_readwrite("hazard_radius", &env::WorldConfig::hazard_radius)
      .def_readwrite("pillar_radius", &env::WorldConfig::pillar_radius)
      .def_readwrite("arena_half_extent", &env::WorldConfig::arena_half_extent)
      .def_readwrite("horizon", &env::WorldConfig::horizon)
      .def_readwrite("dt", &env::WorldConfig::dt)
      .def_readwrite("lidar_bins", &env::WorldConfig::lidar_bins)
      .def_readwrite("lidar_max_range", &env::WorldConfig::lidar_max_range)
      .def_readwrite("layout_seed", &env::WorldConfig::layout_seed)
      .def_property_readonly("observation_size", &env::WorldConfig::observation_size)
      .def("validate", &env::WorldConfig::validate);

  py::class_<env::Environment>(m, "Environment")
      .def(py::init<env::WorldConfig>(), py::arg("config") = env::WorldConfig{})
      .def("reset",
           [](env::Environment& e, std::uint64_t seed) { return e.reset(seed).flatten(); },
           py::arg("seed"))
      .def("step",
           [](env::Environment& e, std::array<double, 2> action) {
             const auto& r = e.step(action);
             py::dict d;
             d["observation"] = r.observation.flatten();
             d["reward"] = r.reward;
             d["cost"] = r.extrinsic_cost;
             d["violation"] = r.violation;
             d["done"] = r.done;
             d["constraint_lidar"] = r.observation.constraint_lidar;
             d["goal_distance"] = r.info.goal_distance;
             d["constraint_distance"] = r.info.constraint_distance;
             return d;
           },
           py::arg("action"))
      .def_property_readonly("done", &env::Environment::done)
      .def("robot_position",
           [](const env::Environment& e) {
             return std::array<double, 2>{e.state().robot.position.x, e.state().robot.position.y};
           })
      .def("layout_json",
           [](const env::Environment& e, std::uint64_t seed) {
             return env::layout_to_json(e.config(), e.state(), seed);
           },
           py::arg("seed"));

  m.def("pseudo_lidar",
        [](std::array<double, 2> position, double heading,
           const std::vector<std::array<double, 2>>& targets, int bins, double max_range) {
          env::RobotState r;
          r.position = {position[0], position[1]};
          r.heading = heading;
          std::vector<env::Vec2> t;
          for (const auto& p : targets) t.push_back({p[0], p[1]});
          return env::pseudo_lidar(r, t, bins, max_range);
        },
        py::arg("position"), py::arg("heading"), py::arg("targets"), py::arg("bins") = 8,
        py::arg("max_range") = 3.0);

  m.def("dense_cost", &cost::dense_cost, py::arg("d_prev"), py::arg("d_now"));
  m.def("distance_change_cost", &cost::distance_change_cost, py::arg("d_prev"), py::arg("d_now"));
  m.def("indicator_change_cost", &cost::indicator_change_cost, py::arg("d_prev"), py::arg("d_now"));
  m.def("margin_cost", &cost::margin_cost, py::arg("d_now"), py::arg("radius"), py::arg("k"));
  m.def("intrinsic_cost",
        [](const std::vector<double>& params, const std::vector<double>& lidar) {
          return cost::intrinsic_cost(intrinsic_params(params), lidar);
        },
        py::arg("params"), py::arg("constraint_lidar"));
  m.attr("INTRINSIC_PARAM_COUNT") = cost::kIntrinsicParamCount;

  m.def("gae",
        [](const std::vector<double>& rewards, const std::vector<double>& values,
           const std::vector<std::uint8_t>& ends, double gamma, double lambda) {
          auto r = rl::gae(rewards, values, ends, gamma, lambda);
          return py::make_tuple(r.advantages, r.returns);
        },
        py::arg("rewards"), py::arg("values"), py::arg("episode_end"), py::arg("gamma"),
        py::arg("lam"));

  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("name"), py::arg("index"));

  m.def("train",
        [](const std::string& algo, const env::WorldConfig& world, const std::string& cost_kind,
           double cost_limit, int iterations, int steps_per_iteration, std::uint64_t seed,
           double margin_k, std::optional<std::vector<double>> params, bool include_extrinsic,
           std::vector<int> hidden_sizes) {
          rl::TrainConfig t;
          t.cost_limit = cost_limit;
          t.iterations = iterations;
          t.steps_per_iteration = steps_per_iteration;
          t.hidden_sizes = std::move(hidden_sizes);
          const auto fn = make_cost(cost_kind, margin_k, std::move(params), include_extrinsic);
          rl::TrainResult r;
          {
            py::gil_scoped_release release;
            r = rl::train(rl::parse_algo(algo), world, fn, t, seed);
          }
          py::list out;
          for (const auto& mm : r.metrics) out.append(metrics_dict(mm));
          return out;
        },
        py::arg("algo"), py::arg("world") = env::WorldConfig{}, py::arg("cost") = "zero",
        py::arg("cost_limit") = 0.0, py::arg("iterations") = 150,
        py::arg("steps_per_iteration") = 4000, py::arg("seed") = 0, py::arg("margin_k") = 3.0,
        py::arg("params") = py::none(), py::arg("include_extrinsic") = true,
        py::arg("hidden_sizes") = std::vector<int>{32, 32});

  m.def("heatmap",
        [](const std::vector<double>& params, const env::WorldConfig& world,
           std::array<double, 2> hazard, int resolution) {
          std::vector<std::array<double, 3>> out;
          for (const auto& c : harness::heatmap_single_hazard(
                   intrinsic_params(params), world, {hazard[0], hazard[1]}, resolution))
            out.push_back({c.x, c.y, c.value});
          return out;
        },
        py::arg("params"), py::arg("world") = env::WorldConfig{},
        py::arg("hazard") = std::array<double, 2>{0.0, 0.0}, py::arg("resolution") = 40);

  m.def("evolve",
        [](std::uint64_t master_seed, int population_size, int n_stages, double top_fraction,
           int eval_seeds, int inner_iterations, int inner_steps, const env::WorldConfig& world,
           std::vector<std::string> learners, std::vector<int> hidden_sizes) {
          evolution::EvolutionConfig cfg;
          cfg.population_size = population_size;
          cfg.n_stages = n_stages;
          cfg.top_fraction = top_fraction;
          cfg.eval_seeds = eval_seeds;
          cfg.env = world;
          cfg.inner.iterations = inner_iterations;
          cfg.inner.steps_per_iteration = inner_steps;
          cfg.inner.hidden_sizes = std::move(hidden_sizes);
          cfg.learners.clear();
          for (const auto& l : learners) cfg.learners.push_back(rl::parse_algo(l));
          evolution::EvolutionResult r;
          {
            py::gil_scoped_release release;
            r = evolution::run_evolution(cfg, master_seed);
          }
          py::dict d;
          d["best_params"] = std::vector<double>(r.best.params.data(),
                                                 r.best.params.data() + r.best.params.size());
          d["best_fitness"] = r.best.fitness;
          d["best_return"] = r.best.mean_return;
          d["best_fitness_per_stage"] = r.best_fitness_per_stage;
          py::list hist;
          for (const auto& h : r.history)
            hist.append(py::make_tuple(h.stage, h.candidate_id, h.fitness, h.mean_return,
                                       h.is_survivor));
          d["history"] = hist;
          return d;
        },
        py::arg("master_seed") = 0, py::arg("population_size") = 8, py::arg("n_stages") = 4,
        py::arg("top_fraction") = 0.1, py::arg("eval_seeds") = 2,
        py::arg("inner_iterations") = 40, py::arg("inner_steps") = 4000,
        py::arg("world") = env::WorldConfig{},
        py::arg("learners") = std::vector<std::string>{"CPO", "PPOLagrangian"},
        py::arg("hidden_sizes") = std::vector<int>{32, 32});
}
