#ifndef AUTOCOST_COST_HPP_
#define AUTOCOST_COST_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autocost/env.hpp"
#include "autocost/nn.hpp"

namespace autocost::cost {

inline constexpr int kIntrinsicInputs = 8;
inline constexpr int kIntrinsicHidden = 4;
inline constexpr int kIntrinsicParamCount = 41;

enum class CostKind {
  Zero,
  IntrinsicNet,
  Dense,
  DistanceChange,
  IndicatorChange,
  Margin
};

std::string to_string(CostKind kind);
CostKind parse_cost_kind(const std::string& text);

// 8 -> 4 -> 1, sigmoid output. The hidden activation defaults to sigmoid.
nn::Architecture intrinsic_architecture(
    nn::Activation hidden = nn::Activation::Sigmoid);

// What a cost function may look at for one transition.
struct CostFeatures {
  std::span<const double> constraint_lidar;
  double prev_constraint_distance = 0.0;
  double constraint_distance = 0.0;
  double obstacle_radius = 0.0;  // R_h or R_p
};

CostFeatures features_from_step(const env::WorldConfig& config,
                                const env::StepResult& step);

double intrinsic_cost(const nn::MlpParams& params,
                      std::span<const double> constraint_lidar);
// max(d_prev - d_now, 0)
double dense_cost(double d_prev, double d_now);
// d_prev - d_now, may be negative
double distance_change_cost(double d_prev, double d_now);
// 1[d_prev - d_now >= 0]
double indicator_change_cost(double d_prev, double d_now);
// max(0, k * R - d_now)
double margin_cost(double d_now, double radius, double k);

struct CostFn {
  CostKind kind = CostKind::Zero;
  std::optional<nn::MlpParams> params;  // IntrinsicNet only
  double margin_multiplier = 1.0;       // Margin only
  // false selects the without-extrinsic ablation: the total is the
  // cost function's value alone.
  bool include_extrinsic = true;

  static CostFn zero();
  static CostFn intrinsic(nn::MlpParams params);
  static CostFn dense();
  static CostFn distance_change();
  static CostFn indicator_change();
  static CostFn margin(double k);

  // The added (intrinsic) term only. Throws ContractError for an
  // IntrinsicNet with the wrong architecture.
  double value(const CostFeatures& features) const;
  std::string describe() const;
};

double total_cost(double extrinsic, const CostFn& fn,
                  const CostFeatures& features);

// Intrinsic cost with the robot placed at `position` (lidar recomputed).
double intrinsic_cost_at(const nn::MlpParams& params,
                         const env::WorldConfig& config,
                         const env::WorldState& world,
                         const env::Vec2& position, double heading = 0.0);

struct HeatmapCell {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

// Robot (heading 0) at every cell center of a resolution x resolution grid
// spanning the arena, row-major from the bottom-left.
std::vector<HeatmapCell> heatmap(const nn::MlpParams& params,
                                 const env::WorldConfig& config,
                                 const env::WorldState& world,
                                 int grid_resolution);

// x,y,value
std::string heatmap_csv(const std::vector<HeatmapCell>& cells);

// Intrinsic parameters as a flat JSON array of 41 numbers.
std::string params_to_json(const nn::MlpParams& params);
nn::MlpParams params_from_json(
    const std::string& text, nn::Activation hidden = nn::Activation::Sigmoid);

}  // namespace autocost::cost

#endif  // AUTOCOST_COST_HPP_
