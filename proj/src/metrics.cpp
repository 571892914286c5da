#include "hamf/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "hamf/io.hpp"

namespace hamf {

FutureTruth focal_future(const Scenario& s) {
  FutureTruth gt;
  gt.positions = Eigen::MatrixX2d::Zero(s.future_steps, 2);
  gt.valid.assign(static_cast<std::size_t>(s.future_steps), 0);
  const AgentTrack& f = s.focal();
  for (Index k = 0; k < s.future_steps; ++k) {
    const auto src = static_cast<std::size_t>(s.history_steps + k);
    if (!f.valid[src]) continue;
    gt.positions.row(k) = f.positions[src].transpose();
    gt.valid[static_cast<std::size_t>(k)] = 1;
  }
  return gt;
}

namespace {

Index last_valid(const FutureTruth& gt) {
  for (Index t = static_cast<Index>(gt.valid.size()) - 1; t >= 0; --t)
    if (gt.valid[static_cast<std::size_t>(t)]) return t;
  return -1;
}

void check_shapes(const PredictionSet& p, const FutureTruth& gt) {
  if (p.trajectories.empty()) throw std::invalid_argument("metrics: prediction has no modes");
  if (p.probabilities.size() != p.trajectories.size())
    throw std::invalid_argument("metrics: probability count differs from mode count");
  for (const auto& t : p.trajectories)
    if (t.rows() != gt.positions.rows())
      throw ShapeError("metrics", {t.rows(), 2}, {gt.positions.rows(), 2});
}

double ade(const Eigen::MatrixX2d& traj, const FutureTruth& gt) {
  double total = 0.0;
  Index n = 0;
  for (Index t = 0; t < traj.rows(); ++t)
    if (gt.valid[static_cast<std::size_t>(t)]) {
      total += (traj.row(t) - gt.positions.row(t)).norm();
      ++n;
    }
  return total / static_cast<double>(n);
}

double fde(const Eigen::MatrixX2d& traj, const FutureTruth& gt) {
  const Index t = last_valid(gt);
  return (traj.row(t) - gt.positions.row(t)).norm();
}

Index require_future(const FutureTruth& gt) {
  const Index t = last_valid(gt);
  if (t < 0) throw std::invalid_argument("metrics: no valid future step");
  return t;
}

}  // namespace

std::vector<Index> top_k_modes(const PredictionSet& p, Index k) {
  std::vector<Index> order(p.trajectories.size());
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return p.probabilities[static_cast<std::size_t>(a)] > p.probabilities[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(std::min<Index>(k, static_cast<Index>(order.size()))));
  return order;
}

double min_ade(const PredictionSet& p, const FutureTruth& gt, Index k) {
  check_shapes(p, gt);
  require_future(gt);
  double best = std::numeric_limits<double>::infinity();
  for (Index m : top_k_modes(p, k)) best = std::min(best, ade(p.trajectories[static_cast<std::size_t>(m)], gt));
  return best;
}

double min_fde(const PredictionSet& p, const FutureTruth& gt, Index k) {
  check_shapes(p, gt);
  require_future(gt);
  double best = std::numeric_limits<double>::infinity();
  for (Index m : top_k_modes(p, k)) best = std::min(best, fde(p.trajectories[static_cast<std::size_t>(m)], gt));
  return best;
}

bool is_miss(const PredictionSet& p, const FutureTruth& gt, Index k, double threshold) {
  return min_fde(p, gt, k) > threshold;
}

double brier_min_fde(const PredictionSet& p, const FutureTruth& gt, Index k) {
  check_shapes(p, gt);
  require_future(gt);
  double best = std::numeric_limits<double>::infinity();
  double prob = 0.0;
  for (Index m : top_k_modes(p, k)) {
    const double e = fde(p.trajectories[static_cast<std::size_t>(m)], gt);
    if (e < best) {
      best = e;
      prob = p.probabilities[static_cast<std::size_t>(m)];
    }
  }
  return best + (1.0 - prob) * (1.0 - prob);
}

std::optional<ScenarioMetrics> scenario_metrics(const PredictionSet& p, const FutureTruth& gt) {
  if (last_valid(gt) < 0) return std::nullopt;
  ScenarioMetrics m;
  m.scenario_id = p.scenario_id;
  m.min_ade1 = min_ade(p, gt, 1);
  m.min_fde1 = min_fde(p, gt, 1);
  m.min_ade6 = min_ade(p, gt, 6);
  m.min_fde6 = min_fde(p, gt, 6);
  m.miss6 = is_miss(p, gt, 6) ? 1.0 : 0.0;
  m.brier_min_fde6 = brier_min_fde(p, gt, 6);
  return m;
}

MetricReport aggregate(std::vector<ScenarioMetrics> rows, Index excluded) {
  if (rows.empty()) throw std::invalid_argument("aggregate: no scenario with a valid future");
  MetricReport r;
  for (const auto& m : rows) {
    r.min_ade1 += m.min_ade1;
    r.min_fde1 += m.min_fde1;
    r.min_ade6 += m.min_ade6;
    r.min_fde6 += m.min_fde6;
    r.miss_rate6 += m.miss6;
    r.brier_min_fde6 += m.brier_min_fde6;
  }
  const auto n = static_cast<double>(rows.size());
  r.min_ade1 /= n;
  r.min_fde1 /= n;
  r.min_ade6 /= n;
  r.min_fde6 /= n;
  r.miss_rate6 /= n;
  r.brier_min_fde6 /= n;
  r.n_scenarios = static_cast<Index>(rows.size());
  r.n_excluded = excluded;
  r.rows = std::move(rows);
  return r;
}

std::string metrics_csv(const MetricReport& r) {
  std::ostringstream out;
  out << "scenario_id,minADE1,minFDE1,minADE6,minFDE6,miss6,bminFDE6\n";
  char buf[512];
  for (const auto& m : r.rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.min_ade1, m.min_fde1, m.min_ade6,
                  m.min_fde6, m.miss6, m.brier_min_fde6);
    out << m.scenario_id << buf;
  }
  return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, const MetricReport& r) {
  write_text_file(path, metrics_csv(r));
}

}  // namespace hamf
