#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hamf/ops.hpp"
#include "hamf/scene.hpp"

namespace hamf {

inline constexpr double kMissThreshold = 2.0;

/// Ground-truth future of the focal agent, in the same frame as the
/// predictions it is compared with.
struct FutureTruth {
  Eigen::MatrixX2d positions;  // [T_f, 2]
  Mask valid;                  // T_f
};

FutureTruth focal_future(const Scenario& s);

/// Mode indices ordered by descending probability (stable: equal
/// probabilities keep index order), truncated to min(k, modes).
std::vector<Index> top_k_modes(const PredictionSet& p, Index k);

double min_ade(const PredictionSet& p, const FutureTruth& gt, Index k);
double min_fde(const PredictionSet& p, const FutureTruth& gt, Index k);
/// 1 when every top-k mode ends farther than `threshold` from the final
/// valid ground-truth point.
bool is_miss(const PredictionSet& p, const FutureTruth& gt, Index k, double threshold = kMissThreshold);
/// minFDE_6 + (1 - p)^2, p the probability of the endpoint-minimizing mode.
double brier_min_fde(const PredictionSet& p, const FutureTruth& gt, Index k = 6);

struct ScenarioMetrics {
  std::string scenario_id;
  double min_ade1 = 0, min_fde1 = 0, min_ade6 = 0, min_fde6 = 0, miss6 = 0, brier_min_fde6 = 0;
};

/// Empty when the scenario has no valid future step.
std::optional<ScenarioMetrics> scenario_metrics(const PredictionSet& p, const FutureTruth& gt);

struct MetricReport {
  double min_ade1 = 0, min_fde1 = 0, min_ade6 = 0, min_fde6 = 0, miss_rate6 = 0, brier_min_fde6 = 0;
  Index n_scenarios = 0;
  Index n_excluded = 0;
  std::vector<ScenarioMetrics> rows;
};

/// Averages per-scenario rows in order. Throws on an empty list.
MetricReport aggregate(std::vector<ScenarioMetrics> rows, Index excluded = 0);

std::string metrics_csv(const MetricReport& r);
void write_metrics_csv(const std::filesystem::path& path, const MetricReport& r);

/// Evaluates any predictor over a dataset. Throws on an empty dataset.
template <typename Predictor>
MetricReport evaluate(const std::vector<Scenario>& data, Predictor&& predict) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<ScenarioMetrics> rows;
  Index excluded = 0;
  for (const Scenario& s : data) {
    const PredictionSet p = predict(s);
    if (auto m = scenario_metrics(p, focal_future(s)))
      rows.push_back(std::move(*m));
    else
      ++excluded;
  }
  return aggregate(std::move(rows), excluded);
}

}  // namespace hamf
