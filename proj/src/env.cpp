#include "autocost/env.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "autocost/errors.hpp"
#include "autocost/seeding.hpp"
#include "json.hpp"

namespace autocost::env {

namespace {

constexpr int kMaxAttemptsPerEntity = 1000;
constexpr int kMaxLayoutAttempts = 50;
// Extra spacing between the spawned robot and anything it could collide with.
constexpr double kSpawnGap = 0.05;
// Separation added when projecting one disc out of another so the next
// overlap test does not trip on rounding.
constexpr double kContactSlack = 1e-9;
constexpr int kContactPasses = 4;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Disc {
  Vec2 center;
  double radius;
  double gap;  // required extra clearance to this disc
};

std::optional<Vec2> sample_clear(std::mt19937_64& rng, double half_extent,
                                 double wall_margin, double radius,
                                 const std::vector<Disc>& placed) {
  const double lim = half_extent - wall_margin;
  if (lim <= 0.0) return std::nullopt;
  std::uniform_real_distribution<double> coord(-lim, lim);
  for (int attempt = 0; attempt < kMaxAttemptsPerEntity; ++attempt) {
    Vec2 p{coord(rng), coord(rng)};
    bool clear = std::all_of(placed.begin(), placed.end(), [&](const Disc& d) {
      return distance(p, d.center) >= radius + d.radius + d.gap;
    });
    if (clear) return p;
  }
  return std::nullopt;
}

double nearest_distance(const Vec2& p, std::span<const Vec2> targets) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : targets) best = std::min(best, distance(p, t));
  return best;
}

Vec2 clamp_to_arena(const Vec2& p, double half_extent, double radius) {
  const double lim = half_extent - radius;
  return {std::clamp(p.x, -lim, lim), std::clamp(p.y, -lim, lim)};
}

// Pushes `mover` (radius r) out of a fixed disc; returns true on overlap.
bool separate(Vec2& mover, double r, const Vec2& fixed, double fixed_radius,
              const Vec2& fallback_dir) {
  const Vec2 d = mover - fixed;
  const double dist = d.norm();
  const double need = r + fixed_radius;
  if (dist >= need) return false;
  const Vec2 n = dist > 1e-12 ? d * (1.0 / dist) : fallback_dir;
  mover = fixed + n * (need + kContactSlack);
  return true;
}

void refresh_cached_distances(const WorldConfig& config, WorldState& state) {
  state.prev_goal_distance = distance(state.robot.position, state.goal);
  if (state.box) {
    state.prev_box_distances =
        BoxDistances{distance(state.robot.position, state.goal),
                     distance(*state.box, state.goal)};
  } else {
    state.prev_box_distances.reset();
  }
  state.prev_constraint_distance =
      constraint_distance(config, state.robot.position, state.obstacles);
}

void resample_goal(const WorldConfig& config, WorldState& state) {
  std::vector<Disc> placed;
  for (const auto& o : state.obstacles)
    placed.push_back({o, config.obstacle_radius(), 0.0});
  placed.push_back({state.robot.position, config.robot_radius, 0.0});
  if (state.box) placed.push_back({*state.box, config.box_radius, 0.0});
  auto goal = sample_clear(state.rng, config.arena_half_extent,
                           config.goal_radius, config.goal_radius, placed);
  if (!goal) throw InfeasibleLayoutError("could not resample goal location");
  state.goal = *goal;
}

template <typename Enum>
Enum parse_enum(const std::string& text,
                std::initializer_list<std::pair<const char*, Enum>> options,
                const char* what) {
  for (const auto& [name, value] : options) {
    if (text == name) return value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + text + "'");
}

}  // namespace

std::string to_string(Task task) {
  return task == Task::Goal ? "Goal" : "Push";
}
std::string to_string(ConstraintKind kind) {
  return kind == ConstraintKind::Hazard ? "Hazard" : "Pillar";
}
std::string to_string(RobotKind kind) {
  return kind == RobotKind::Point ? "Point" : "Car";
}
Task parse_task(const std::string& text) {
  return parse_enum<Task>(text, {{"Goal", Task::Goal}, {"Push", Task::Push}},
                          "task");
}
ConstraintKind parse_constraint_kind(const std::string& text) {
  return parse_enum<ConstraintKind>(
      text,
      {{"Hazard", ConstraintKind::Hazard}, {"Pillar", ConstraintKind::Pillar}},
      "constraint kind");
}
RobotKind parse_robot_kind(const std::string& text) {
  return parse_enum<RobotKind>(
      text, {{"Point", RobotKind::Point}, {"Car", RobotKind::Car}},
      "robot kind");
}

double wrap_angle(double angle) {
  double a = angle - kTwoPi * std::floor((angle + std::numbers::pi) / kTwoPi);
  // floor can land exactly on +pi through rounding.
  if (a >= std::numbers::pi) a -= kTwoPi;
  return a;
}

void WorldConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(goal_radius > 0 && hazard_radius > 0 && pillar_radius > 0 &&
              box_radius > 0 && robot_radius > 0,
          "all radii must be positive");
  require(arena_half_extent > 0, "arena_half_extent must be positive");
  require(horizon > 0, "horizon must be positive");
  require(dt > 0, "dt must be positive");
  require(lidar_bins >= 1, "lidar_bins must be >= 1");
  require(lidar_max_range > 0, "lidar_max_range must be positive");
  require(n_obstacles >= 0, "n_obstacles must be >= 0");
}

int WorldConfig::observation_size() const {
  int n = 5 + 2 * lidar_bins;
  if (task == Task::Push) n += lidar_bins;
  return n;
}

Eigen::VectorXd Observation::flatten() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(
      proprio.size() + goal_lidar.size() + constraint_lidar.size() +
      box_lidar.size()));
  Eigen::Index k = 0;
  for (double x : proprio) v[k++] = x;
  for (double x : goal_lidar) v[k++] = x;
  for (double x : constraint_lidar) v[k++] = x;
  for (double x : box_lidar) v[k++] = x;
  return v;
}

double constraint_distance(const WorldConfig& config, const Vec2& position,
                           std::span<const Vec2> obstacles) {
  const double d = nearest_distance(position, obstacles);
  if (config.constraint_kind == ConstraintKind::Pillar)
    return d - config.pillar_radius;
  return d;
}

std::vector<double> pseudo_lidar(const RobotState& robot,
                                 std::span<const Vec2> targets, int bins,
                                 double max_range) {
  if (bins < 1) throw ContractError("pseudo_lidar: bins must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(bins), 0.0);
  const double sector = kTwoPi / bins;
  for (const auto& t : targets) {
    const Vec2 d = t - robot.position;
    const double dist = d.norm();
    if (dist >= max_range) continue;
    double rel = std::atan2(d.y, d.x) - robot.heading;
    rel -= kTwoPi * std::floor(rel / kTwoPi);
    int bin = static_cast<int>(std::floor(rel / sector));
    bin = std::clamp(bin, 0, bins - 1);
    out[static_cast<std::size_t>(bin)] =
        std::max(out[static_cast<std::size_t>(bin)], 1.0 - dist / max_range);
  }
  return out;
}

Observation observe(const WorldConfig& config, const WorldState& state) {
  Observation obs;
  const auto& r = state.robot;
  const double c = std::cos(r.heading);
  const double s = std::sin(r.heading);
  obs.proprio = {c * r.velocity.x + s * r.velocity.y,
                 -s * r.velocity.x + c * r.velocity.y, r.angular_velocity, c,
                 s};
  const std::array<Vec2, 1> goal{state.goal};
  obs.goal_lidar =
      pseudo_lidar(r, goal, config.lidar_bins, config.lidar_max_range);
  obs.constraint_lidar = pseudo_lidar(r, state.obstacles, config.lidar_bins,
                                      config.lidar_max_range);
  if (config.task == Task::Push && state.box) {
    const std::array<Vec2, 1> box{*state.box};
    obs.box_lidar =
        pseudo_lidar(r, box, config.lidar_bins, config.lidar_max_range);
  }
  return obs;
}

std::pair<WorldState, Observation> reset(const WorldConfig& config,
                                         std::uint64_t seed) {
  config.validate();
  const double r = config.robot_radius;
  const double obstacle_r = config.obstacle_radius();
  const double extent = config.arena_half_extent;

  std::mt19937_64 rng(splitmix64(seed));
  std::optional<std::mt19937_64> layout_rng;
  if (config.layout_seed) layout_rng.emplace(splitmix64(*config.layout_seed));

  std::vector<Vec2> fixed_obstacles;
  if (layout_rng) {
    // Fixed layouts are drawn once and must be feasible on their own.
    bool ok = false;
    for (int attempt = 0; attempt < kMaxLayoutAttempts && !ok; ++attempt) {
      std::vector<Disc> placed;
      fixed_obstacles.clear();
      ok = true;
      for (int i = 0; i < config.n_obstacles; ++i) {
        auto p = sample_clear(*layout_rng, extent, obstacle_r + 2 * r,
                              obstacle_r, placed);
        if (!p) {
          ok = false;
          break;
        }
        fixed_obstacles.push_back(*p);
        placed.push_back({*p, obstacle_r, 2 * r});
      }
    }
    if (!ok)
      throw InfeasibleLayoutError("cannot place " +
                                  std::to_string(config.n_obstacles) +
                                  " obstacles with clearance");
  }

  for (int attempt = 0; attempt < kMaxLayoutAttempts; ++attempt) {
    WorldState state;
    std::vector<Disc> placed;
    bool ok = true;

    if (layout_rng) {
      state.obstacles = fixed_obstacles;
    } else {
      for (int i = 0; i < config.n_obstacles && ok; ++i) {
        auto p = sample_clear(rng, extent, obstacle_r + 2 * r, obstacle_r,
                              placed);
        if (!p) {
          ok = false;
          break;
        }
        state.obstacles.push_back(*p);
        placed.push_back({*p, obstacle_r, 2 * r});
      }
      if (!ok) continue;
    }
    placed.clear();
    for (const auto& o : state.obstacles) placed.push_back({o, obstacle_r, 0.0});

    auto goal = sample_clear(rng, extent, config.goal_radius,
                             config.goal_radius, placed);
    if (!goal) continue;
    state.goal = *goal;

    std::vector<Disc> robot_blockers;
    for (const auto& o : state.obstacles)
      robot_blockers.push_back({o, obstacle_r, kSpawnGap});
    robot_blockers.push_back({state.goal, config.goal_radius, 0.0});

    if (config.task == Task::Push) {
      std::vector<Disc> box_blockers;
      for (const auto& o : state.obstacles)
        box_blockers.push_back({o, obstacle_r, 2 * r});
      box_blockers.push_back({state.goal, config.goal_radius, 0.0});
      auto box = sample_clear(rng, extent, config.box_radius + 2 * r,
                              config.box_radius, box_blockers);
      if (!box) continue;
      state.box = *box;
      robot_blockers.push_back({*box, config.box_radius, kSpawnGap});
    }

    auto robot = sample_clear(rng, extent, r, r, robot_blockers);
    if (!robot) continue;
    state.robot.position = *robot;
    std::uniform_real_distribution<double> heading(-std::numbers::pi,
                                                   std::numbers::pi);
    state.robot.heading = wrap_angle(heading(rng));

    state.step_index = 0;
    refresh_cached_distances(config, state);
    state.rng = rng;
    Observation obs = observe(config, state);
    return {std::move(state), std::move(obs)};
  }
  throw InfeasibleLayoutError(
      "configuration infeasible: could not place all entities with clearance "
      "after bounded rejection sampling");
}

double hazard_cost(const WorldState& state, double hazard_radius) {
  if (state.obstacles.empty()) return 0.0;
  const double d = nearest_distance(state.robot.position, state.obstacles);
  return std::max(0.0, hazard_radius - d);
}

double pillar_cost(const WorldConfig& config, const WorldState& state) {
  const double need = config.robot_radius + config.pillar_radius;
  for (const auto& p : state.obstacles) {
    if (distance(state.robot.position, p) < need) return 1.0;
  }
  return 0.0;
}

void resolve_pillar_contacts(const WorldConfig& config, WorldState& state) {
  const Vec2 fallback{std::cos(state.robot.heading),
                      std::sin(state.robot.heading)};
  for (int pass = 0; pass < kContactPasses; ++pass) {
    bool any = false;
    for (const auto& p : state.obstacles) {
      any |= separate(state.robot.position, config.robot_radius, p,
                      config.pillar_radius, fallback * -1.0);
    }
    state.robot.position = clamp_to_arena(
        state.robot.position, config.arena_half_extent, config.robot_radius);
    if (!any) break;
  }
}

double goal_reward(double prev_goal_distance, double goal_distance,
                   double goal_radius) {
  return (prev_goal_distance - goal_distance) +
         (goal_distance < goal_radius ? 1.0 : 0.0);
}

double push_reward(const WorldState& state, const WorldState& next_state,
                   double goal_radius) {
  if (!state.box || !next_state.box)
    throw ContractError("push_reward requires a box in both states");
  const double dr_prev = distance(state.robot.position, state.goal);
  const double db_prev = distance(*state.box, state.goal);
  const double dr = distance(next_state.robot.position, next_state.goal);
  const double db = distance(*next_state.box, next_state.goal);
  return (dr_prev - dr) + (db_prev - db) + (db < goal_radius ? 1.0 : 0.0);
}

std::pair<WorldState, StepResult> step(const WorldConfig& config,
                                       const WorldState& state,
                                       std::array<double, 2> action) {
  if (state.step_index >= config.horizon)
    throw ContractError("step called on a finished episode");
  for (double& a : action) {
    if (!std::isfinite(a)) throw ContractError("non-finite action");
    a = std::clamp(a, -1.0, 1.0);
  }

  WorldState next = state;
  RobotState& robot = next.robot;

  double forward = 0.0;
  double turn = 0.0;
  if (config.robot_kind == RobotKind::Point) {
    turn = action[0];
    forward = action[1];
  } else {
    // Differential drive: (left, right) wheel commands.
    forward = 0.5 * (action[0] + action[1]);
    turn = 0.5 * (action[1] - action[0]);
  }
  const double omega = config.angular_gain * turn;
  const Vec2 start = robot.position;
  robot.heading = wrap_angle(robot.heading + omega * config.dt);
  const Vec2 dir{std::cos(robot.heading), std::sin(robot.heading)};
  robot.position = clamp_to_arena(
      robot.position + dir * (config.linear_gain * forward * config.dt),
      config.arena_half_extent, config.robot_radius);

  if (next.box) {
    Vec2& box = *next.box;
    separate(box, config.box_radius, robot.position, config.robot_radius, dir);
    box = clamp_to_arena(box, config.arena_half_extent, config.box_radius);
    if (config.constraint_kind == ConstraintKind::Pillar) {
      for (const auto& p : next.obstacles)
        separate(box, config.box_radius, p, config.pillar_radius, dir);
    }
    // A box stuck on a wall or pillar blocks the robot instead.
    separate(robot.position, config.robot_radius, box, config.box_radius,
             dir * -1.0);
    robot.position = clamp_to_arena(robot.position, config.arena_half_extent,
                                    config.robot_radius);
  }

  double cost = 0.0;
  if (config.constraint_kind == ConstraintKind::Hazard) {
    cost = hazard_cost(next, config.hazard_radius);
  } else {
    cost = pillar_cost(config, next);
    if (cost > 0.0) resolve_pillar_contacts(config, next);
  }

  robot.velocity = (robot.position - start) * (1.0 / config.dt);
  robot.angular_velocity = omega;

  StepResult result;
  const double goal_dist = distance(robot.position, next.goal);
  bool achieved = false;
  if (config.task == Task::Goal) {
    result.reward =
        goal_reward(state.prev_goal_distance, goal_dist, config.goal_radius);
    achieved = goal_dist < config.goal_radius;
  } else {
    const BoxDistances prev = state.prev_box_distances.value_or(
        BoxDistances{distance(state.robot.position, state.goal),
                     state.box ? distance(*state.box, state.goal) : 0.0});
    const double db = distance(*next.box, next.goal);
    result.reward = (prev.robot_goal - goal_dist) + (prev.box_goal - db) +
                    (db < config.goal_radius ? 1.0 : 0.0);
    achieved = db < config.goal_radius;
  }

  result.extrinsic_cost = cost;
  result.violation = cost > 0.0;
  result.info.goal_distance = goal_dist;
  result.info.prev_constraint_distance = state.prev_constraint_distance;
  result.info.constraint_distance =
      constraint_distance(config, robot.position, next.obstacles);
  result.info.goal_achieved = achieved;

  if (achieved) resample_goal(config, next);
  next.step_index = state.step_index + 1;
  refresh_cached_distances(config, next);
  result.done = next.step_index == config.horizon;
  result.observation = observe(config, next);
  return {std::move(next), std::move(result)};
}

Environment::Environment(WorldConfig config) : config_(std::move(config)) {
  config_.validate();
}

const Observation& Environment::reset(std::uint64_t seed) {
  auto [state, obs] = env::reset(config_, seed);
  state_ = std::move(state);
  observation_ = std::move(obs);
  return observation_;
}

const StepResult& Environment::step(std::array<double, 2> action) {
  auto [next, result] = env::step(config_, state_, action);
  state_ = std::move(next);
  last_ = std::move(result);
  observation_ = last_.observation;
  return last_;
}

std::string layout_to_json(const WorldConfig& config, const WorldState& state,
                           std::uint64_t seed) {
  using nlohmann::json;
  json doc;
  doc["task"] = to_string(config.task);
  doc["constraint"] = to_string(config.constraint_kind);
  doc["robot_kind"] = to_string(config.robot_kind);
  doc["seed"] = seed;
  doc["layout_seed"] = config.layout_seed ? json(*config.layout_seed) : json();
  doc["step_index"] = state.step_index;
  doc["robot"] = {{"x", state.robot.position.x},
                  {"y", state.robot.position.y},
                  {"heading", state.robot.heading}};
  doc["goal"] = {state.goal.x, state.goal.y};
  doc["box"] = state.box ? json{state.box->x, state.box->y} : json();
  json obstacles = json::array();
  for (const auto& o : state.obstacles) obstacles.push_back({o.x, o.y});
  doc["obstacles"] = obstacles;
  std::ostringstream rng;
  rng << state.rng;
  doc["rng_state"] = rng.str();
  return doc.dump(2);
}

WorldState layout_from_json(const WorldConfig& config,
                            const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("layout: ") + e.what());
  }
  auto vec = [](const json& j) {
    if (!j.is_array() || j.size() != 2)
      throw ParseError("layout: expected [x, y] pair");
    return Vec2{j[0].get<double>(), j[1].get<double>()};
  };
  try {
    if (doc.at("task").get<std::string>() != to_string(config.task) ||
        doc.at("constraint").get<std::string>() !=
            to_string(config.constraint_kind))
      throw ParseError("layout: task/constraint do not match configuration");
    WorldState state;
    state.robot.position = {doc.at("robot").at("x").get<double>(),
                            doc.at("robot").at("y").get<double>()};
    state.robot.heading = doc.at("robot").at("heading").get<double>();
    state.goal = vec(doc.at("goal"));
    if (!doc.at("box").is_null()) state.box = vec(doc.at("box"));
    for (const auto& o : doc.at("obstacles")) state.obstacles.push_back(vec(o));
    state.step_index = doc.value("step_index", 0);
    if (doc.contains("rng_state")) {
      std::istringstream rng(doc.at("rng_state").get<std::string>());
      rng >> state.rng;
    } else {
      state.rng.seed(splitmix64(doc.at("seed").get<std::uint64_t>()));
    }
    refresh_cached_distances(config, state);
    return state;
  } catch (const json::exception& e) {
    throw ParseError(std::string("layout: ") + e.what());
  }
}

std::string render_csv_header() { return "step,entity,index,x,y\n"; }

std::string render_csv_rows(const WorldState& state) {
  std::ostringstream out;
  out.precision(17);
  auto row = [&](const char* entity, std::size_t index, const Vec2& p) {
    out << state.step_index << ',' << entity << ',' << index << ',' << p.x
        << ',' << p.y << '\n';
  };
  row("robot", 0, state.robot.position);
  row("goal", 0, state.goal);
  if (state.box) row("box", 0, *state.box);
  for (std::size_t i = 0; i < state.obstacles.size(); ++i)
    row("obstacle", i, state.obstacles[i]);
  return out.str();
}

}  // namespace autocost::env
