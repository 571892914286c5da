#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hamf/tensor.hpp"

namespace hamf {

inline constexpr Index kHistorySteps = 50;
inline constexpr Index kFutureSteps = 60;
inline constexpr Index kPolylinePoints = 20;
inline constexpr double kSampleRateHz = 10.0;

enum class AgentCategory { vehicle, pedestrian, cyclist, other };
enum class LaneType { lane, crosswalk, boundary };
enum class Maneuver { straight, left_turn, right_turn, lane_change, stop, intersection_mix };

inline constexpr Index kAgentCategoryCount = 4;
inline constexpr Index kLaneTypeCount = 3;

std::string_view to_string(AgentCategory c);
std::string_view to_string(LaneType t);
std::string_view to_string(Maneuver m);
AgentCategory parse_agent_category(std::string_view s);
LaneType parse_lane_type(std::string_view s);
/// Throws std::invalid_argument for an unknown template name.
Maneuver parse_maneuver(std::string_view s);
const std::vector<Maneuver>& all_maneuvers();

using Point2 = Eigen::Vector2d;

struct AgentTrack {
  std::vector<Point2> positions;  // history_steps + future_steps
  std::vector<double> headings;
  std::vector<std::uint8_t> valid;
  AgentCategory category = AgentCategory::vehicle;

  bool operator==(const AgentTrack&) const = default;
};

struct MapPolyline {
  std::vector<Point2> points;  // kPolylinePoints
  std::vector<std::uint8_t> valid;
  LaneType lane_type = LaneType::lane;

  bool operator==(const MapPolyline&) const = default;
};

struct Scenario {
  std::string id;
  std::vector<AgentTrack> agents;
  std::vector<MapPolyline> map;
  Index focal_index = 0;
  double sample_rate = kSampleRateHz;
  Index history_steps = kHistorySteps;
  Index future_steps = kFutureSteps;

  bool operator==(const Scenario&) const = default;

  Index total_steps() const { return history_steps + future_steps; }
  const AgentTrack& focal() const { return agents.at(static_cast<std::size_t>(focal_index)); }
};

/// Planar rigid frame: local = R(-angle) * (global - origin).
struct RigidTransform {
  Point2 origin = Point2::Zero();
  double angle = 0.0;

  Point2 to_local(const Point2& p) const;
  Point2 to_global(const Point2& p) const;
  double heading_to_local(double h) const;
  double heading_to_global(double h) const;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

struct NormalizedScene {
  Scenario scene;  // focal frame
  RigidTransform transform;
};

/// Multi-modal forecast for the focal agent: K trajectories of future_steps
/// points with a probability per mode.
struct PredictionSet {
  std::string scenario_id;
  std::vector<Eigen::MatrixX2d> trajectories;
  std::vector<double> probabilities;

  Index modes() const { return static_cast<Index>(trajectories.size()); }
};

/// Last valid observed step of a track, or -1.
Index last_observed_step(const AgentTrack& track, Index history_steps);

/// Moves every agent and map point into the frame centred on the focal
/// agent's last valid observed pose. Throws if the focal history is empty.
NormalizedScene normalize_to_focal(const Scenario& s);

/// Applies `t` to every coordinate of `s` as a global-from-local map.
Scenario transform_scenario(const Scenario& s, const RigidTransform& t);

PredictionSet denormalize_predictions(const PredictionSet& p, const RigidTransform& t);

/// Extrapolates the focal agent's last observed velocity. Falls back to
/// holding the last position when fewer than two observed steps are valid.
PredictionSet constant_velocity_baseline(const Scenario& s);

/// Resamples a polyline to `count` points at uniform arc length.
std::vector<Point2> resample_polyline(const std::vector<Point2>& points, Index count);

/// Structural invariant violations of a scenario (empty when valid).
std::vector<std::string> scenario_violations(const Scenario& s);

struct GeneratorOptions {
  /// Amplitude scale of the smooth lateral wobble and speed jitter. 0 gives
  /// noise-free kinematics.
  double noise = 1.0;
  Index history_steps = kHistorySteps;
  Index future_steps = kFutureSteps;
  double sample_rate = kSampleRateHz;
};

Scenario generate_scenario(std::uint64_t seed, Maneuver maneuver, Index n_agents, Index n_polylines,
                           const GeneratorOptions& options = {});

/// Generator-level audit: speed in [0, 20] m/s, longitudinal acceleration in
/// +/-4 m/s^2, focal future within 2 m of some lane centerline, final focal
/// displacement in [0, 120] m. Includes scenario_violations().
std::vector<std::string> audit_generated(const Scenario& s);

}  // namespace hamf
