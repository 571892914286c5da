#include "hamf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "hamf/random.hpp"

namespace hamf {

namespace {

constexpr double kPi = std::numbers::pi;

struct Pose {
  Point2 p = Point2::Zero();
  double heading = 0.0;
};

Point2 direction(double heading) { return {std::cos(heading), std::sin(heading)}; }

/// Arc-length parameterized path built from straight and circular pieces.
/// Queries before the start or past the end extend straight.
class Path {
 public:
  void line(double length) { segments_.push_back({length, 0.0}); }
  void arc(double length, double curvature) { segments_.push_back({length, curvature}); }

  Pose at(double s) const {
    Pose pose;
    if (s <= 0.0) {
      pose.p = s * direction(0.0);
      return pose;
    }
    for (const auto& seg : segments_) {
      const double step = std::min(s, seg.length);
      advance(pose, step, seg.curvature);
      s -= step;
      if (s <= 0.0) return pose;
    }
    advance(pose, s, 0.0);
    return pose;
  }

  std::vector<Point2> sample(double from, double to, double spacing = 1.0) const {
    std::vector<Point2> pts;
    const auto n = static_cast<Index>(std::ceil((to - from) / spacing));
    for (Index i = 0; i <= n; ++i) pts.push_back(at(from + (to - from) * static_cast<double>(i) / static_cast<double>(n)).p);
    return pts;
  }

 private:
  struct Segment {
    double length;
    double curvature;
  };

  static void advance(Pose& pose, double ds, double k) {
    if (std::abs(k) < 1e-12) {
      pose.p += ds * direction(pose.heading);
    } else {
      const double h1 = pose.heading + k * ds;
      pose.p += Point2((std::sin(h1) - std::sin(pose.heading)) / k, (std::cos(pose.heading) - std::cos(h1)) / k);
      pose.heading = h1;
    }
  }

  std::vector<Segment> segments_;
};

double clamp(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

double point_segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const Point2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

MapPolyline make_polyline(const std::vector<Point2>& dense, LaneType type) {
  MapPolyline pl;
  pl.points = resample_polyline(dense, kPolylinePoints);
  pl.valid.assign(pl.points.size(), 1);
  pl.lane_type = type;
  return pl;
}

std::vector<Point2> offset_line(double x0, double x1, double y) {
  return {Point2(x0, y), Point2(x1, y)};
}

}  // namespace

std::string_view to_string(AgentCategory c) {
  switch (c) {
    case AgentCategory::vehicle: return "vehicle";
    case AgentCategory::pedestrian: return "pedestrian";
    case AgentCategory::cyclist: return "cyclist";
    case AgentCategory::other: return "other";
  }
  return "other";
}

std::string_view to_string(LaneType t) {
  switch (t) {
    case LaneType::lane: return "lane";
    case LaneType::crosswalk: return "crosswalk";
    case LaneType::boundary: return "boundary";
  }
  return "lane";
}

std::string_view to_string(Maneuver m) {
  switch (m) {
    case Maneuver::straight: return "straight";
    case Maneuver::left_turn: return "left_turn";
    case Maneuver::right_turn: return "right_turn";
    case Maneuver::lane_change: return "lane_change";
    case Maneuver::stop: return "stop";
    case Maneuver::intersection_mix: return "intersection_mix";
  }
  return "straight";
}

AgentCategory parse_agent_category(std::string_view s) {
  for (auto c : {AgentCategory::vehicle, AgentCategory::pedestrian, AgentCategory::cyclist, AgentCategory::other})
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown agent category: " + std::string(s));
}

LaneType parse_lane_type(std::string_view s) {
  for (auto t : {LaneType::lane, LaneType::crosswalk, LaneType::boundary})
    if (to_string(t) == s) return t;
  throw std::invalid_argument("unknown lane type: " + std::string(s));
}

const std::vector<Maneuver>& all_maneuvers() {
  static const std::vector<Maneuver> all{Maneuver::straight,    Maneuver::left_turn, Maneuver::right_turn,
                                         Maneuver::lane_change, Maneuver::stop,      Maneuver::intersection_mix};
  return all;
}

Maneuver parse_maneuver(std::string_view s) {
  for (auto m : all_maneuvers())
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown scenario template: " + std::string(s));
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

Point2 RigidTransform::to_local(const Point2& p) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const Point2 d = p - origin;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

Point2 RigidTransform::to_global(const Point2& p) const {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x() - s * p.y() + origin.x(), s * p.x() + c * p.y() + origin.y()};
}

double RigidTransform::heading_to_local(double h) const { return wrap_angle(h - angle); }
double RigidTransform::heading_to_global(double h) const { return wrap_angle(h + angle); }

Index last_observed_step(const AgentTrack& track, Index history_steps) {
  const Index n = std::min<Index>(history_steps, static_cast<Index>(track.valid.size()));
  for (Index t = n - 1; t >= 0; --t)
    if (track.valid[static_cast<std::size_t>(t)]) return t;
  return -1;
}

namespace {

template <typename PointMap, typename HeadingMap>
Scenario map_scenario(const Scenario& s, PointMap point_map, HeadingMap heading_map) {
  Scenario out = s;
  for (auto& a : out.agents)
    for (std::size_t t = 0; t < a.positions.size(); ++t) {
      if (!a.valid[t]) continue;
      a.positions[t] = point_map(a.positions[t]);
      a.headings[t] = heading_map(a.headings[t]);
    }
  for (auto& pl : out.map)
    for (std::size_t i = 0; i < pl.points.size(); ++i)
      if (pl.valid[i]) pl.points[i] = point_map(pl.points[i]);
  return out;
}

}  // namespace

NormalizedScene normalize_to_focal(const Scenario& s) {
  if (s.focal_index < 0 || s.focal_index >= static_cast<Index>(s.agents.size()))
    throw std::invalid_argument("normalize_to_focal: focal index out of range");
  const AgentTrack& focal = s.focal();
  const Index last = last_observed_step(focal, s.history_steps);
  if (last < 0) throw std::invalid_argument("normalize_to_focal: focal agent '" + s.id + "' has no valid history");
  RigidTransform tf{focal.positions[static_cast<std::size_t>(last)], focal.headings[static_cast<std::size_t>(last)]};
  NormalizedScene n{map_scenario(
                        s, [&](const Point2& p) { return tf.to_local(p); },
                        [&](double h) { return tf.heading_to_local(h); }),
                    tf};
  return n;
}

Scenario transform_scenario(const Scenario& s, const RigidTransform& t) {
  return map_scenario(
      s, [&](const Point2& p) { return t.to_global(p); }, [&](double h) { return t.heading_to_global(h); });
}

PredictionSet denormalize_predictions(const PredictionSet& p, const RigidTransform& t) {
  PredictionSet out = p;
  for (auto& traj : out.trajectories)
    for (Index i = 0; i < traj.rows(); ++i) traj.row(i) = t.to_global(traj.row(i).transpose()).transpose();
  return out;
}

PredictionSet constant_velocity_baseline(const Scenario& s) {
  const AgentTrack& f = s.focal();
  const Index last = last_observed_step(f, s.history_steps);
  if (last < 0) throw std::invalid_argument("constant_velocity_baseline: focal agent has no valid history");
  Index prev = -1;
  for (Index t = last - 1; t >= 0; --t)
    if (f.valid[static_cast<std::size_t>(t)]) {
      prev = t;
      break;
    }
  const double dt = 1.0 / s.sample_rate;
  const Point2 p_last = f.positions[static_cast<std::size_t>(last)];
  Point2 velocity = Point2::Zero();
  if (prev >= 0)
    velocity = (p_last - f.positions[static_cast<std::size_t>(prev)]) / (static_cast<double>(last - prev) * dt);
  PredictionSet out;
  out.scenario_id = s.id;
  Eigen::MatrixX2d traj(s.future_steps, 2);
  for (Index k = 0; k < s.future_steps; ++k) {
    const double elapsed = static_cast<double>(s.history_steps + k - last) * dt;
    traj.row(k) = (p_last + velocity * elapsed).transpose();
  }
  out.trajectories.push_back(std::move(traj));
  out.probabilities.push_back(1.0);
  return out;
}

std::vector<Point2> resample_polyline(const std::vector<Point2>& points, Index count) {
  if (points.size() < 2 || count < 2) throw std::invalid_argument("resample_polyline: need >= 2 points");
  std::vector<double> cum(points.size(), 0.0);
  for (std::size_t i = 1; i < points.size(); ++i) cum[i] = cum[i - 1] + (points[i] - points[i - 1]).norm();
  const double total = cum.back();
  if (total <= 0.0) throw std::invalid_argument("resample_polyline: zero-length polyline");
  std::vector<Point2> out;
  out.reserve(static_cast<std::size_t>(count));
  std::size_t seg = 1;
  for (Index i = 0; i < count; ++i) {
    const double target = total * static_cast<double>(i) / static_cast<double>(count - 1);
    while (seg < points.size() - 1 && cum[seg] < target) ++seg;
    const double len = cum[seg] - cum[seg - 1];
    const double u = len > 0.0 ? clamp((target - cum[seg - 1]) / len, 0.0, 1.0) : 0.0;
    out.push_back(points[seg - 1] + u * (points[seg] - points[seg - 1]));
  }
  return out;
}

std::vector<std::string> scenario_violations(const Scenario& s) {
  std::vector<std::string> v;
  auto fail = [&](const std::string& msg) { v.push_back(s.id + ": " + msg); };
  if (s.agents.empty()) fail("no agents");
  if (s.focal_index < 0 || s.focal_index >= static_cast<Index>(s.agents.size())) fail("focal index out of range");
  if (s.sample_rate <= 0.0 || std::abs(static_cast<double>(s.history_steps) / s.sample_rate - 5.0) > 1e-9 ||
      std::abs(static_cast<double>(s.future_steps) / s.sample_rate - 6.0) > 1e-9)
    fail("horizons do not span 5 s history / 6 s future");
  const auto total = static_cast<std::size_t>(s.total_steps());
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    const std::string tag = "agent " + std::to_string(i) + ": ";
    if (a.positions.size() != total || a.headings.size() != total || a.valid.size() != total) {
      fail(tag + "track length mismatch");
      continue;
    }
    for (std::size_t t = 0; t < total; ++t) {
      if (a.valid[t]) {
        if (!a.positions[t].allFinite() || !std::isfinite(a.headings[t])) fail(tag + "non-finite valid step");
      } else if (a.positions[t] != Point2::Zero() || a.headings[t] != 0.0) {
        fail(tag + "padded step " + std::to_string(t) + " carries data");
      }
    }
  }
  if (s.focal_index >= 0 && s.focal_index < static_cast<Index>(s.agents.size()) &&
      last_observed_step(s.focal(), s.history_steps) < 0)
    fail("focal agent has no valid history");
  for (std::size_t i = 0; i < s.map.size(); ++i) {
    const auto& pl = s.map[i];
    const std::string tag = "polyline " + std::to_string(i) + ": ";
    if (pl.points.size() != pl.valid.size()) {
      fail(tag + "mask length mismatch");
      continue;
    }
    Index n_valid = 0;
    const Point2* prev = nullptr;
    for (std::size_t k = 0; k < pl.points.size(); ++k) {
      if (!pl.valid[k]) continue;
      ++n_valid;
      if (!pl.points[k].allFinite()) fail(tag + "non-finite point");
      if (prev && *prev == pl.points[k]) fail(tag + "repeated consecutive point");
      prev = &pl.points[k];
    }
    if (n_valid < 2) fail(tag + "fewer than 2 valid points");
  }
  return v;
}

std::vector<std::string> audit_generated(const Scenario& s) {
  std::vector<std::string> v = scenario_violations(s);
  if (!v.empty()) return v;
  auto fail = [&](const std::string& msg) { v.push_back(s.id + ": " + msg); };
  const double dt = 1.0 / s.sample_rate;
  constexpr double kSpeedSlack = 0.05;
  constexpr double kAccelSlack = 0.25;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    double prev_speed = -1.0;
    for (std::size_t t = 0; t + 1 < a.positions.size(); ++t) {
      if (!a.valid[t] || !a.valid[t + 1]) {
        prev_speed = -1.0;
        continue;
      }
      const double speed = (a.positions[t + 1] - a.positions[t]).norm() / dt;
      if (speed > 20.0 + kSpeedSlack) fail("agent " + std::to_string(i) + " speed " + std::to_string(speed));
      if (prev_speed >= 0.0 && std::abs(speed - prev_speed) / dt > 4.0 + kAccelSlack)
        fail("agent " + std::to_string(i) + " acceleration " + std::to_string((speed - prev_speed) / dt) +
             " at step " + std::to_string(t));
      prev_speed = speed;
    }
  }
  const AgentTrack& f = s.focal();
  const auto h = static_cast<std::size_t>(s.history_steps);
  for (std::size_t t = h; t < f.positions.size(); ++t) {
    if (!f.valid[t]) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& pl : s.map) {
      if (pl.lane_type != LaneType::lane) continue;
      for (std::size_t k = 0; k + 1 < pl.points.size(); ++k)
        if (pl.valid[k] && pl.valid[k + 1])
          best = std::min(best, point_segment_distance(f.positions[t], pl.points[k], pl.points[k + 1]));
    }
    if (best > 2.0) {
      fail("focal future step " + std::to_string(t) + " is " + std::to_string(best) + " m from any lane centerline");
      break;
    }
  }
  const Index last = last_observed_step(f, s.history_steps);
  if (f.valid.back() && last >= 0) {
    const double disp = (f.positions.back() - f.positions[static_cast<std::size_t>(last)]).norm();
    if (disp < 0.0 || disp > 120.0) fail("final displacement " + std::to_string(disp));
  }
  return v;
}

namespace {

// Directions available at an intersection, as signed curvature sign.
enum class Branch { straight = 0, left = 1, right = -1 };

Path branch_path(double s_turn, Branch b, double radius) {
  Path path;
  path.line(s_turn);
  if (b != Branch::straight) {
    const double k = static_cast<double>(static_cast<int>(b)) / radius;
    path.arc(radius * kPi / 2.0, k);
  }
  path.line(1000.0);
  return path;
}

AgentTrack make_linear_track(Rng& rng, Index total, Index history, double dt, const Point2& start, double heading,
                             double speed, AgentCategory category) {
  AgentTrack a;
  a.category = category;
  a.positions.assign(static_cast<std::size_t>(total), Point2::Zero());
  a.headings.assign(static_cast<std::size_t>(total), 0.0);
  a.valid.assign(static_cast<std::size_t>(total), 1);
  for (Index t = 0; t < total; ++t) {
    a.positions[static_cast<std::size_t>(t)] = start + speed * static_cast<double>(t) * dt * direction(heading);
    a.headings[static_cast<std::size_t>(t)] = heading;
  }
  if (rng.uniform() < 0.3) {
    const auto lead = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(history - 1)));
    for (Index t = 0; t < lead; ++t) a.valid[static_cast<std::size_t>(t)] = 0;
  }
  if (rng.uniform() < 0.2) {
    const auto keep = static_cast<Index>(rng.below(static_cast<std::uint64_t>(total - history)));
    for (Index t = history + keep; t < total; ++t) a.valid[static_cast<std::size_t>(t)] = 0;
  }
  for (Index t = 0; t < total; ++t)
    if (!a.valid[static_cast<std::size_t>(t)]) {
      a.positions[static_cast<std::size_t>(t)] = Point2::Zero();
      a.headings[static_cast<std::size_t>(t)] = 0.0;
    }
  return a;
}

}  // namespace

Scenario generate_scenario(std::uint64_t seed, Maneuver maneuver, Index n_agents, Index n_polylines,
                           const GeneratorOptions& options) {
  if (n_agents < 1) throw std::invalid_argument("generate_scenario: n_agents must be >= 1");
  if (n_polylines < 1) throw std::invalid_argument("generate_scenario: n_polylines must be >= 1");
  if (options.history_steps < 2 || options.future_steps < 1 || options.sample_rate <= 0.0)
    throw std::invalid_argument("generate_scenario: invalid horizons");
  const Index H = options.history_steps;
  const Index T = H + options.future_steps;
  const double dt = 1.0 / options.sample_rate;
  const double noise = options.noise;
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(maneuver) + 1);

  Maneuver kind = maneuver;
  if (maneuver == Maneuver::intersection_mix) {
    const Maneuver options3[] = {Maneuver::straight, Maneuver::left_turn, Maneuver::right_turn};
    kind = options3[rng.below(3)];
  }
  const bool turning = kind == Maneuver::left_turn || kind == Maneuver::right_turn;
  const bool intersection = turning || maneuver == Maneuver::intersection_mix ||
                            ((kind == Maneuver::straight || kind == Maneuver::stop) && rng.uniform() < 0.5);

  const double v0 = rng.uniform(4.0, 14.0);
  const double radius = rng.uniform(12.0, 25.0);
  const double v_turn = std::sqrt(2.5 * radius);
  const double ahead = rng.uniform(5.0, 25.0);
  const double lc_ahead = rng.uniform(0.0, 20.0);
  const double lc_side = rng.uniform() < 0.5 ? 1.0 : -1.0;
  const auto stop_step = static_cast<Index>(H + static_cast<Index>(rng.below(static_cast<std::uint64_t>(
                                                    std::max<Index>(1, options.future_steps / 3)))));
  const double stop_decel = rng.uniform(2.0, 3.5);
  const double wobble_amp = 0.3 * noise * rng.uniform(0.3, 1.0);
  const double wobble_len = rng.uniform(40.0, 80.0);
  const double wobble_phase = rng.uniform(0.0, 2.0 * kPi);

  // Longitudinal motion.
  std::vector<double> s_at(static_cast<std::size_t>(T)), v_at(static_cast<std::size_t>(T));
  double v = v0, s = 0.0, jitter = 0.0;
  double s_turn = 0.0;
  const double arc_len = radius * kPi / 2.0;
  for (Index t = 0; t < T; ++t) {
    s_at[static_cast<std::size_t>(t)] = s;
    v_at[static_cast<std::size_t>(t)] = v;
    if (t == H - 1) {
      const double brake = std::max(0.0, (v * v - v_turn * v_turn) / (2.0 * 3.0));
      s_turn = s + std::max(ahead, turning ? brake : 0.0);
    }
    double vdes = v0;
    if (t >= H - 1 && turning && s > s_turn - 10.0 - std::max(0.0, (v0 * v0 - v_turn * v_turn) / 6.0) &&
        s < s_turn + arc_len)
      vdes = v_turn;
    jitter = clamp(0.9 * jitter + 0.2 * noise * rng.normal(), -1.0, 1.0);
    double a = clamp(0.8 * (vdes - v) + jitter, -3.5, 2.5);
    if (kind == Maneuver::stop && t >= stop_step) a = -stop_decel;
    const double vn = clamp(v + a * dt, 0.0, 20.0);
    s += 0.5 * (v + vn) * dt;
    v = vn;
  }
  const double s_end = s_at.back();
  const double s_obs = s_at[static_cast<std::size_t>(H - 1)];

  // Route geometry in the path frame.
  Path route;
  if (turning) {
    route = branch_path(s_turn, kind == Maneuver::left_turn ? Branch::left : Branch::right, radius);
  } else if (kind == Maneuver::lane_change) {
    const double phi = 0.2;
    const double r = 3.5 / (2.0 * (1.0 - std::cos(phi)));
    route.line(s_obs + lc_ahead);
    route.arc(r * phi, lc_side / r);
    route.arc(r * phi, -lc_side / r);
    route.line(1000.0);
  } else {
    route.line(1000.0);
  }

  auto wobble = [&](double sp) { return wobble_amp * std::sin(2.0 * kPi * sp / wobble_len + wobble_phase); };
  auto wobble_slope = [&](double sp) {
    return wobble_amp * 2.0 * kPi / wobble_len * std::cos(2.0 * kPi * sp / wobble_len + wobble_phase);
  };

  const RigidTransform world{Point2(rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0)), rng.uniform(-kPi, kPi)};

  AgentTrack focal;
  focal.category = AgentCategory::vehicle;
  for (Index t = 0; t < T; ++t) {
    const double sp = s_at[static_cast<std::size_t>(t)];
    const Pose pose = route.at(sp);
    const Point2 normal(-std::sin(pose.heading), std::cos(pose.heading));
    const Point2 p = pose.p + wobble(sp) * normal;
    focal.positions.push_back(world.to_global(p));
    focal.headings.push_back(world.heading_to_global(pose.heading + std::atan(wobble_slope(sp))));
    focal.valid.push_back(1);
  }

  // Map polylines, most relevant first.
  std::vector<MapPolyline> map;
  const double start = -10.0;
  auto add_pieces = [&](const Path& path, double from, double to, LaneType type) {
    const double piece = 80.0;
    for (double a = from; a < to - 1e-6; a += piece) map.push_back(make_polyline(path.sample(a, std::min(to, a + piece)), type));
  };
  if (intersection) {
    add_pieces(route, start, s_turn, LaneType::lane);
    const Branch taken = kind == Maneuver::left_turn ? Branch::left
                         : kind == Maneuver::right_turn ? Branch::right
                                                        : Branch::straight;
    const double reach = std::max(arc_len + 40.0, s_end - s_turn + 10.0);
    if (kind == Maneuver::stop || kind == Maneuver::straight) {
      add_pieces(route, s_turn, s_turn + reach, LaneType::lane);
    } else {
      add_pieces(branch_path(s_turn, taken, radius), s_turn, s_turn + reach, LaneType::lane);
    }
    for (Branch b : {Branch::straight, Branch::left, Branch::right}) {
      if (b == taken) continue;
      const double len = b == Branch::straight ? 50.0 : arc_len + 30.0;
      map.push_back(make_polyline(branch_path(s_turn, b, radius).sample(s_turn, s_turn + len), LaneType::lane));
    }
  } else if (kind == Maneuver::lane_change) {
    Path original;
    original.line(1000.0);
    add_pieces(route, s_obs + lc_ahead, s_end + 10.0, LaneType::lane);
    add_pieces(original, start, s_end + 10.0, LaneType::lane);
  } else {
    add_pieces(route, start, s_end + 10.0, LaneType::lane);
  }
  // Context around the approach road (path frame x axis).
  const double x_far = std::max(s_obs + 40.0, 60.0);
  std::vector<MapPolyline> extras;
  extras.push_back(make_polyline(offset_line(start, x_far, 1.75), LaneType::boundary));
  extras.push_back(make_polyline(offset_line(start, x_far, -1.75), LaneType::boundary));
  if (kind != Maneuver::lane_change || lc_side < 0)
    extras.push_back(make_polyline(offset_line(start, x_far, 3.5), LaneType::lane));
  if (kind != Maneuver::lane_change || lc_side > 0)
    extras.push_back(make_polyline(offset_line(start, x_far, -3.5), LaneType::lane));
  const double xwalk = intersection ? s_turn - 5.0 : s_obs + ahead;
  extras.push_back(make_polyline({Point2(xwalk, -6.0), Point2(xwalk, 6.0)}, LaneType::crosswalk));
  if (intersection) {
    extras.push_back(make_polyline({Point2(s_turn + radius, -40.0), Point2(s_turn + radius, 40.0)}, LaneType::lane));
    extras.push_back(make_polyline({Point2(s_turn + radius - 3.5, 40.0), Point2(s_turn + radius - 3.5, -40.0)}, LaneType::lane));
  }
  for (auto& e : extras) map.push_back(std::move(e));
  for (Index k = 2; static_cast<Index>(map.size()) < n_polylines; ++k) {
    const double side = (k % 2 == 0) ? 1.0 : -1.0;
    map.push_back(make_polyline(offset_line(start, x_far, side * 3.5 * static_cast<double>(k / 2 + 1)), LaneType::lane));
  }
  map.resize(static_cast<std::size_t>(n_polylines));
  for (auto& pl : map)
    for (auto& p : pl.points) p = world.to_global(p);

  // Surrounding agents in the path frame, then mapped to the world frame.
  std::vector<AgentTrack> others;
  for (Index i = 1; i < n_agents; ++i) {
    const double u = rng.uniform();
    AgentTrack a;
    if (u < 0.7) {
      const double lane = std::array<double, 3>{-3.5, 0.0, 3.5}[rng.below(3)];
      const bool oncoming = lane > 0 && rng.uniform() < 0.4;
      const double speed = rng.uniform(3.0, 15.0);
      const double x0 = oncoming ? rng.uniform(60.0, 140.0) : (lane == 0.0 ? rng.uniform(15.0, 50.0) : rng.uniform(-30.0, 40.0));
      a = make_linear_track(rng, T, H, dt, Point2(x0, lane), oncoming ? kPi : 0.0, speed, AgentCategory::vehicle);
    } else if (u < 0.85) {
      const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
      a = make_linear_track(rng, T, H, dt, Point2(xwalk + rng.uniform(-1.0, 1.0), -6.0 * dir), dir * kPi / 2.0,
                            rng.uniform(0.8, 1.8), AgentCategory::pedestrian);
    } else if (u < 0.95) {
      a = make_linear_track(rng, T, H, dt, Point2(rng.uniform(-20.0, 30.0), -2.5), 0.0, rng.uniform(3.0, 6.0),
                            AgentCategory::cyclist);
    } else {
      a = make_linear_track(rng, T, H, dt, Point2(rng.uniform(0.0, 60.0), rng.uniform(4.0, 8.0)),
                            rng.uniform(-kPi, kPi), 0.0, AgentCategory::other);
    }
    for (std::size_t t = 0; t < a.positions.size(); ++t)
      if (a.valid[t]) {
        a.positions[t] = world.to_global(a.positions[t]);
        a.headings[t] = world.heading_to_global(a.headings[t]);
      }
    others.push_back(std::move(a));
  }

  Scenario scn;
  std::ostringstream id;
  id << "syn-" << to_string(maneuver) << '-' << seed;
  scn.id = id.str();
  scn.sample_rate = options.sample_rate;
  scn.history_steps = H;
  scn.future_steps = options.future_steps;
  scn.focal_index = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n_agents)));
  for (Index i = 0, k = 0; i < n_agents; ++i) {
    if (i == scn.focal_index)
      scn.agents.push_back(focal);
    else
      scn.agents.push_back(std::move(others[static_cast<std::size_t>(k++)]));
  }
  scn.map = std::move(map);
  return scn;
}

}  // namespace hamf
