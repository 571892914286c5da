#include "test_util.hpp"

#include <limits>
#include <sstream>

#include "hamf/metrics.hpp"

using namespace hamf;
using namespace hamf::testing;

namespace {

PredictionSet random_prediction(Rng& rng, Index modes, Index steps, double spread = 5.0) {
  PredictionSet p;
  p.scenario_id = "s";
  double z = 0.0;
  for (Index k = 0; k < modes; ++k) {
    Eigen::MatrixX2d t(steps, 2);
    for (Index i = 0; i < steps; ++i) t.row(i) << rng.uniform(-spread, spread), rng.uniform(-spread, spread);
    p.trajectories.push_back(t);
    // Coarse values so that probability ties occur.
    p.probabilities.push_back(static_cast<double>(1 + rng.below(4)));
    z += p.probabilities.back();
  }
  for (double& q : p.probabilities) q /= z;
  return p;
}

FutureTruth random_truth(Rng& rng, Index steps, bool gaps) {
  FutureTruth gt;
  gt.positions.resize(steps, 2);
  gt.valid.assign(static_cast<std::size_t>(steps), 1);
  for (Index i = 0; i < steps; ++i) {
    gt.positions.row(i) << rng.uniform(-5, 5), rng.uniform(-5, 5);
    if (gaps && rng.uniform() < 0.3) gt.valid[static_cast<std::size_t>(i)] = 0;
  }
  gt.valid[0] = 1;
  return gt;
}

// Picks modes by repeated argmax, lowest index first among equals.
std::vector<Index> oracle_top(const PredictionSet& p, Index k) {
  std::vector<Index> chosen;
  std::vector<bool> used(p.probabilities.size(), false);
  for (Index r = 0; r < std::min(k, p.modes()); ++r) {
    Index best = -1;
    for (Index m = 0; m < p.modes(); ++m)
      if (!used[static_cast<std::size_t>(m)] &&
          (best < 0 || p.probabilities[static_cast<std::size_t>(m)] > p.probabilities[static_cast<std::size_t>(best)]))
        best = m;
    used[static_cast<std::size_t>(best)] = true;
    chosen.push_back(best);
  }
  return chosen;
}

double oracle_ade(const Eigen::MatrixX2d& t, const FutureTruth& gt) {
  double s = 0.0;
  int n = 0;
  for (Index i = 0; i < t.rows(); ++i)
    if (gt.valid[static_cast<std::size_t>(i)]) {
      s += std::hypot(t(i, 0) - gt.positions(i, 0), t(i, 1) - gt.positions(i, 1));
      ++n;
    }
  return s / n;
}

double oracle_fde(const Eigen::MatrixX2d& t, const FutureTruth& gt) {
  Index last = 0;
  for (Index i = 0; i < t.rows(); ++i)
    if (gt.valid[static_cast<std::size_t>(i)]) last = i;
  return std::hypot(t(last, 0) - gt.positions(last, 0), t(last, 1) - gt.positions(last, 1));
}

PredictionSet shifted(const FutureTruth& gt, const std::vector<Point2>& offsets, std::vector<double> probs) {
  PredictionSet p;
  p.scenario_id = "s";
  for (const auto& o : offsets) {
    Eigen::MatrixX2d t = gt.positions;
    t.rowwise() += o.transpose();
    p.trajectories.push_back(t);
  }
  p.probabilities = std::move(probs);
  return p;
}

}  // namespace

TEST_CASE("metrics agree with brute-force oracles on random pairs") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const PredictionSet p = random_prediction(rng, 6, 12);
    const FutureTruth gt = random_truth(rng, 12, trial % 2 == 1);
    for (Index k : {1, 3, 6}) {
      const auto top = oracle_top(p, k);
      CHECK(top_k_modes(p, k) == top);
      double ade = std::numeric_limits<double>::infinity(), fde = ade, bp = 0.0;
      for (Index m : top) {
        ade = std::min(ade, oracle_ade(p.trajectories[static_cast<std::size_t>(m)], gt));
        const double e = oracle_fde(p.trajectories[static_cast<std::size_t>(m)], gt);
        if (e < fde) {
          fde = e;
          bp = p.probabilities[static_cast<std::size_t>(m)];
        }
      }
      CHECK(min_ade(p, gt, k) == doctest::Approx(ade).epsilon(1e-12));
      CHECK(min_fde(p, gt, k) == doctest::Approx(fde).epsilon(1e-12));
      CHECK(is_miss(p, gt, k) == (fde > 2.0));
      CHECK(brier_min_fde(p, gt, k) == doctest::Approx(fde + (1 - bp) * (1 - bp)).epsilon(1e-12));
    }
  }
}

TEST_CASE("exact prediction scores zero") {
  Rng rng(2);
  const FutureTruth gt = random_truth(rng, 12, false);
  const PredictionSet p = shifted(gt, {Point2(0, 0)}, {1.0});
  CHECK(min_ade(p, gt, 1) == 0.0);
  CHECK(min_fde(p, gt, 6) == 0.0);
  CHECK_FALSE(is_miss(p, gt, 6));
  CHECK(brier_min_fde(p, gt, 6) == 0.0);
}

TEST_CASE("a constant offset of (3, 4) costs 5 m everywhere") {
  Rng rng(3);
  const FutureTruth gt = random_truth(rng, 12, true);
  const PredictionSet p = shifted(gt, {Point2(3, 4)}, {1.0});
  CHECK(min_ade(p, gt, 1) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(min_fde(p, gt, 1) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(is_miss(p, gt, 1));
}

TEST_CASE("uniform probabilities add (5/6)^2 to the endpoint error") {
  Rng rng(4);
  const FutureTruth gt = random_truth(rng, 12, false);
  std::vector<Point2> offsets;
  for (int k = 0; k < 6; ++k) offsets.emplace_back(k + 1.0, 0.0);
  const PredictionSet p = shifted(gt, offsets, std::vector<double>(6, 1.0 / 6.0));
  CHECK(brier_min_fde(p, gt, 6) == doctest::Approx(1.0 + 25.0 / 36.0).epsilon(1e-12));
  const PredictionSet sure = shifted(gt, offsets, {1, 0, 0, 0, 0, 0});
  CHECK(brier_min_fde(sure, gt, 6) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("miss threshold is strict") {
  Rng rng(5);
  const FutureTruth gt = random_truth(rng, 12, false);
  CHECK_FALSE(is_miss(shifted(gt, {Point2(2.0, 0)}, {1.0}), gt, 6));
  CHECK(is_miss(shifted(gt, {Point2(2.0 + 1e-9, 0)}, {1.0}), gt, 6));
}

TEST_CASE("more modes never increase the minimum errors") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const PredictionSet p = random_prediction(rng, 6, 12);
    const FutureTruth gt = random_truth(rng, 12, true);
    for (Index k = 1; k < 6; ++k) {
      CHECK(min_ade(p, gt, k + 1) <= min_ade(p, gt, k));
      CHECK(min_fde(p, gt, k + 1) <= min_fde(p, gt, k));
    }
  }
}

TEST_CASE("metrics are invariant to a shared rigid transform") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const PredictionSet p = random_prediction(rng, 6, 12);
    const FutureTruth gt = random_truth(rng, 12, true);
    RigidTransform t{Point2(rng.uniform(-500, 500), rng.uniform(-500, 500)), rng.uniform(-3.1, 3.1)};
    const PredictionSet pt = denormalize_predictions(p, t);
    FutureTruth gtt = gt;
    for (Index i = 0; i < gt.positions.rows(); ++i)
      gtt.positions.row(i) = t.to_global(gt.positions.row(i).transpose()).transpose();
    CHECK(min_ade(pt, gtt, 6) == doctest::Approx(min_ade(p, gt, 6)).epsilon(1e-9));
    CHECK(min_fde(pt, gtt, 1) == doctest::Approx(min_fde(p, gt, 1)).epsilon(1e-9));
    CHECK(brier_min_fde(pt, gtt, 6) == doctest::Approx(brier_min_fde(p, gt, 6)).epsilon(1e-9));
  }
}

TEST_CASE("scenarios without a valid future are excluded and counted") {
  Rng rng(8);
  const PredictionSet p = random_prediction(rng, 6, 12);
  FutureTruth none = random_truth(rng, 12, false);
  std::fill(none.valid.begin(), none.valid.end(), 0);
  CHECK_FALSE(scenario_metrics(p, none).has_value());
  CHECK_THROWS(min_ade(p, none, 6));
  CHECK_THROWS(aggregate({}));
}

TEST_CASE("report averages equal the CSV column means") {
  Rng rng(9);
  std::vector<ScenarioMetrics> rows;
  for (int i = 0; i < 20; ++i) {
    PredictionSet p = random_prediction(rng, 6, 12);
    p.scenario_id = "s" + std::to_string(i);
    auto m = scenario_metrics(p, random_truth(rng, 12, true));
    REQUIRE(m);
    rows.push_back(*m);
  }
  const MetricReport r = aggregate(rows, 3);
  CHECK(r.n_scenarios == 20);
  CHECK(r.n_excluded == 3);
  std::istringstream in(metrics_csv(r));
  std::string line;
  std::getline(in, line);
  CHECK(line == "scenario_id,minADE1,minFDE1,minADE6,minFDE6,miss6,bminFDE6");
  std::vector<double> sums(6, 0.0);
  int n = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    CHECK(cell == "s" + std::to_string(n));
    for (double& s : sums) {
      std::getline(cells, cell, ',');
      s += std::stod(cell);
    }
    ++n;
  }
  CHECK(n == 20);
  const double expect[] = {r.min_ade1, r.min_fde1, r.min_ade6, r.min_fde6, r.miss_rate6, r.brier_min_fde6};
  for (int c = 0; c < 6; ++c) CHECK(sums[static_cast<std::size_t>(c)] / n == doctest::Approx(expect[c]).epsilon(1e-12));
}

TEST_CASE("constant velocity is exact on noise-free straight driving") {
  GeneratorOptions o;
  o.noise = 0.0;
  std::vector<Scenario> data;
  for (std::uint64_t s = 0; s < 10; ++s) data.push_back(generate_scenario(s, Maneuver::straight, 4, 8, o));
  const MetricReport r = evaluate(data, [](const Scenario& s) { return constant_velocity_baseline(s); });
  CHECK(r.min_ade6 < 1e-9);
  CHECK(r.min_fde6 < 1e-9);
  CHECK(r.miss_rate6 == 0.0);
}
