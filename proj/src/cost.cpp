#include "autocost/cost.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "autocost/csv.hpp"
#include "autocost/errors.hpp"
#include "json.hpp"

namespace autocost::cost {

namespace {

void check_intrinsic_architecture(const nn::Architecture& arch) {
  if (arch.layer_sizes !=
          std::vector<int>{kIntrinsicInputs, kIntrinsicHidden, 1} ||
      arch.output_activation != nn::Activation::Sigmoid)
    throw ContractError(
        "intrinsic cost net must be 8 -> 4 -> 1 with a sigmoid output");
}

// Distances are +inf without obstacles; treat "no change" as zero change.
double change(double d_prev, double d_now) {
  if (std::isinf(d_prev) && std::isinf(d_now)) return 0.0;
  return d_prev - d_now;
}

}  // namespace

std::string to_string(CostKind kind) {
  switch (kind) {
    case CostKind::Zero:
      return "zero";
    case CostKind::IntrinsicNet:
      return "intrinsic";
    case CostKind::Dense:
      return "dense";
    case CostKind::DistanceChange:
      return "distance_change";
    case CostKind::IndicatorChange:
      return "indicator_change";
    case CostKind::Margin:
      return "margin";
  }
  return "?";
}

CostKind parse_cost_kind(const std::string& text) {
  for (auto k : {CostKind::Zero, CostKind::IntrinsicNet, CostKind::Dense,
                 CostKind::DistanceChange, CostKind::IndicatorChange,
                 CostKind::Margin}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown cost kind '" + text + "'");
}

nn::Architecture intrinsic_architecture(nn::Activation hidden) {
  nn::Architecture arch;
  arch.layer_sizes = {kIntrinsicInputs, kIntrinsicHidden, 1};
  arch.hidden_activation = hidden;
  arch.output_activation = nn::Activation::Sigmoid;
  return arch;
}

CostFeatures features_from_step(const env::WorldConfig& config,
                                const env::StepResult& step) {
  CostFeatures f;
  f.constraint_lidar = step.observation.constraint_lidar;
  f.prev_constraint_distance = step.info.prev_constraint_distance;
  f.constraint_distance = step.info.constraint_distance;
  f.obstacle_radius = config.obstacle_radius();
  return f;
}

double intrinsic_cost(const nn::MlpParams& params,
                      std::span<const double> constraint_lidar) {
  check_intrinsic_architecture(params.architecture);
  if (constraint_lidar.size() != static_cast<std::size_t>(kIntrinsicInputs))
    throw ContractError("intrinsic cost expects an 8-bin constraint lidar");
  Eigen::VectorXd x(kIntrinsicInputs);
  for (int i = 0; i < kIntrinsicInputs; ++i) x[i] = constraint_lidar[i];
  return nn::forward(params, x)[0];
}

double dense_cost(double d_prev, double d_now) {
  return std::max(change(d_prev, d_now), 0.0);
}

double distance_change_cost(double d_prev, double d_now) {
  return change(d_prev, d_now);
}

double indicator_change_cost(double d_prev, double d_now) {
  return change(d_prev, d_now) >= 0.0 ? 1.0 : 0.0;
}

double margin_cost(double d_now, double radius, double k) {
  return std::max(0.0, k * radius - d_now);
}

CostFn CostFn::zero() { return {}; }

CostFn CostFn::intrinsic(nn::MlpParams params) {
  check_intrinsic_architecture(params.architecture);
  CostFn fn;
  fn.kind = CostKind::IntrinsicNet;
  fn.params = std::move(params);
  return fn;
}

CostFn CostFn::dense() {
  CostFn fn;
  fn.kind = CostKind::Dense;
  return fn;
}

CostFn CostFn::distance_change() {
  CostFn fn;
  fn.kind = CostKind::DistanceChange;
  return fn;
}

CostFn CostFn::indicator_change() {
  CostFn fn;
  fn.kind = CostKind::IndicatorChange;
  return fn;
}

CostFn CostFn::margin(double k) {
  if (k < 1.0) throw ConfigError("margin multiplier must be >= 1");
  CostFn fn;
  fn.kind = CostKind::Margin;
  fn.margin_multiplier = k;
  return fn;
}

double CostFn::value(const CostFeatures& f) const {
  switch (kind) {
    case CostKind::Zero:
      return 0.0;
    case CostKind::IntrinsicNet:
      if (!params) throw ContractError("intrinsic cost without parameters");
      return intrinsic_cost(*params, f.constraint_lidar);
    case CostKind::Dense:
      return dense_cost(f.prev_constraint_distance, f.constraint_distance);
    case CostKind::DistanceChange:
      return distance_change_cost(f.prev_constraint_distance,
                                  f.constraint_distance);
    case CostKind::IndicatorChange:
      return indicator_change_cost(f.prev_constraint_distance,
                                   f.constraint_distance);
    case CostKind::Margin:
      return margin_cost(f.constraint_distance, f.obstacle_radius,
                         margin_multiplier);
  }
  return 0.0;
}

std::string CostFn::describe() const {
  std::string s = to_string(kind);
  if (kind == CostKind::Margin) s += "(" + csv::format_double(margin_multiplier) + ")";
  if (!include_extrinsic) s += " w/o ex";
  return s;
}

double total_cost(double extrinsic, const CostFn& fn,
                  const CostFeatures& features) {
  if (fn.kind == CostKind::Zero) return fn.include_extrinsic ? extrinsic : 0.0;
  const double added = fn.value(features);
  return fn.include_extrinsic ? extrinsic + added : added;
}

double intrinsic_cost_at(const nn::MlpParams& params,
                         const env::WorldConfig& config,
                         const env::WorldState& world,
                         const env::Vec2& position, double heading) {
  env::RobotState robot;
  robot.position = position;
  robot.heading = heading;
  const auto lidar = env::pseudo_lidar(robot, world.obstacles, config.lidar_bins,
                                       config.lidar_max_range);
  return intrinsic_cost(params, lidar);
}

std::vector<HeatmapCell> heatmap(const nn::MlpParams& params,
                                 const env::WorldConfig& config,
                                 const env::WorldState& world,
                                 int grid_resolution) {
  if (grid_resolution < 1) throw ContractError("grid resolution must be >= 1");
  check_intrinsic_architecture(params.architecture);
  const double extent = config.arena_half_extent;
  const double cell = 2.0 * extent / grid_resolution;
  std::vector<HeatmapCell> cells;
  cells.reserve(static_cast<std::size_t>(grid_resolution) * grid_resolution);
  for (int iy = 0; iy < grid_resolution; ++iy) {
    for (int ix = 0; ix < grid_resolution; ++ix) {
      const env::Vec2 p{-extent + (ix + 0.5) * cell,
                        -extent + (iy + 0.5) * cell};
      cells.push_back({p.x, p.y, intrinsic_cost_at(params, config, world, p)});
    }
  }
  return cells;
}

std::string heatmap_csv(const std::vector<HeatmapCell>& cells) {
  std::string out = "x,y,value\n";
  for (const auto& c : cells) {
    out += csv::format_double(c.x) + ',' + csv::format_double(c.y) + ',' +
           csv::format_double(c.value) + '\n';
  }
  return out;
}

std::string params_to_json(const nn::MlpParams& params) {
  check_intrinsic_architecture(params.architecture);
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < params.values.size(); ++i)
    arr.push_back(params.values[i]);
  return arr.dump();
}

nn::MlpParams params_from_json(const std::string& text, nn::Activation hidden) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("intrinsic params: ") + e.what());
  }
  // Accept a bare array or a best-candidate document.
  if (doc.is_object() && doc.contains("params")) doc = doc["params"];
  if (!doc.is_array() || doc.size() != kIntrinsicParamCount)
    throw ParseError("intrinsic params must be a JSON array of 41 numbers");
  Eigen::VectorXd v(kIntrinsicParamCount);
  for (int i = 0; i < kIntrinsicParamCount; ++i) {
    if (!doc[i].is_number())
      throw ParseError("intrinsic params entry " + std::to_string(i) +
                       " is not a number");
    v[i] = doc[i].get<double>();
  }
  return nn::MlpParams(intrinsic_architecture(hidden), v);
}

}  // namespace autocost::cost
