#ifndef AUTOCOST_ENV_HPP_
#define AUTOCOST_ENV_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace autocost::env {

enum class Task { Goal, Push };
enum class ConstraintKind { Hazard, Pillar };
enum class RobotKind { Point, Car };

std::string to_string(Task task);
std::string to_string(ConstraintKind kind);
std::string to_string(RobotKind kind);
Task parse_task(const std::string& text);
ConstraintKind parse_constraint_kind(const std::string& text);
RobotKind parse_robot_kind(const std::string& text);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// Wraps an angle into [-pi, pi).
double wrap_angle(double angle);

struct WorldConfig {
  Task task = Task::Goal;
  ConstraintKind constraint_kind = ConstraintKind::Hazard;
  RobotKind robot_kind = RobotKind::Point;
  int n_obstacles = 4;
  double goal_radius = 0.3;
  double hazard_radius = 0.2;
  double pillar_radius = 0.2;
  double box_radius = 0.2;
  double robot_radius = 0.1;
  double arena_half_extent = 2.0;
  int horizon = 400;
  double dt = 0.1;
  double linear_gain = 1.0;                     // k_v, m/s at full command
  double angular_gain = std::numbers::pi;       // k_w, rad/s at full command
  int lidar_bins = 8;
  double lidar_max_range = 3.0;
  // When set, obstacle positions come from this seed and stay fixed across
  // resets; robot, goal and box are still drawn from the reset seed.
  std::optional<std::uint64_t> layout_seed;

  // Throws ConfigError.
  void validate() const;

  double obstacle_radius() const {
    return constraint_kind == ConstraintKind::Hazard ? hazard_radius
                                                     : pillar_radius;
  }
  int observation_size() const;
};

struct RobotState {
  Vec2 position;
  double heading = 0.0;  // [-pi, pi)
  Vec2 velocity;          // world frame, m/s
  double angular_velocity = 0.0;

  bool operator==(const RobotState&) const = default;
};

struct BoxDistances {
  double robot_goal = 0.0;  // d_r
  double box_goal = 0.0;    // d_b

  bool operator==(const BoxDistances&) const = default;
};

struct WorldState {
  RobotState robot;
  Vec2 goal;
  std::optional<Vec2> box;
  std::vector<Vec2> obstacles;
  int step_index = 0;
  double prev_goal_distance = 0.0;
  std::optional<BoxDistances> prev_box_distances;
  double prev_constraint_distance = 0.0;
  // Drives goal resampling; part of the state so episodes replay exactly.
  std::mt19937_64 rng;

  bool operator==(const WorldState&) const = default;
};

struct Observation {
  std::array<double, 5> proprio{};  // vx_body, vy_body, w, cos(h), sin(h)
  std::vector<double> goal_lidar;
  std::vector<double> constraint_lidar;
  std::vector<double> box_lidar;  // empty unless task == Push

  // proprio, goal lidar, constraint lidar, box lidar (if present).
  Eigen::VectorXd flatten() const;
  bool operator==(const Observation&) const = default;
};

struct StepInfo {
  double goal_distance = 0.0;
  double constraint_distance = 0.0;
  double prev_constraint_distance = 0.0;
  bool goal_achieved = false;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  double extrinsic_cost = 0.0;
  bool violation = false;
  bool done = false;
  StepInfo info;
};

std::pair<WorldState, Observation> reset(const WorldConfig& config,
                                         std::uint64_t seed);

// Action components are clamped to [-1, 1]. Point robots read
// (turn, forward); car robots read (left wheel, right wheel).
std::pair<WorldState, StepResult> step(const WorldConfig& config,
                                       const WorldState& state,
                                       std::array<double, 2> action);

Observation observe(const WorldConfig& config, const WorldState& state);

// max(0, R_h - d_h) with d_h the distance to the nearest hazard center.
double hazard_cost(const WorldState& state, double hazard_radius);

// 1 if the robot disc strictly overlaps any pillar disc.
double pillar_cost(const WorldConfig& config, const WorldState& state);

// Moves the robot out of every pillar it overlaps along the contact normal.
void resolve_pillar_contacts(const WorldConfig& config, WorldState& state);

double goal_reward(double prev_goal_distance, double goal_distance,
                   double goal_radius);

double push_reward(const WorldState& state, const WorldState& next_state,
                   double goal_radius);

// Bin i covers [2*pi*i/bins, 2*pi*(i+1)/bins) measured counter-clockwise
// from the robot heading. Each bin holds the max over its targets of
// max(0, 1 - dist / max_range).
std::vector<double> pseudo_lidar(const RobotState& robot,
                                 std::span<const Vec2> targets, int bins,
                                 double max_range);

// Distance the constraint-aware costs use: hazard center distance, or
// pillar center distance minus the pillar radius. +inf without obstacles.
double constraint_distance(const WorldConfig& config, const Vec2& position,
                           std::span<const Vec2> obstacles);

// Stateful convenience wrapper used by rollouts and bindings.
class Environment {
 public:
  explicit Environment(WorldConfig config);

  const Observation& reset(std::uint64_t seed);
  const StepResult& step(std::array<double, 2> action);

  const WorldConfig& config() const { return config_; }
  const WorldState& state() const { return state_; }
  const Observation& observation() const { return observation_; }
  bool done() const { return state_.step_index >= config_.horizon; }

 private:
  WorldConfig config_;
  WorldState state_;
  Observation observation_;
  StepResult last_;
};

// Layout document: config summary, seed, and entity positions.
std::string layout_to_json(const WorldConfig& config, const WorldState& state,
                           std::uint64_t seed);
// Restores entity positions and cached distances from a layout document.
// The goal-resampling RNG is reseeded from the stored seed.
WorldState layout_from_json(const WorldConfig& config, const std::string& text);

// One CSV row per entity: step,entity,index,x,y
std::string render_csv_header();
std::string render_csv_rows(const WorldState& state);

}  // namespace autocost::env

#endif  // AUTOCOST_ENV_HPP_
