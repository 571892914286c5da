#include "test_util.hpp"


#include "hamf/loss.hpp"

using namespace hamf;
using namespace hamf::testing;

namespace {

constexpr Index K = 6;
constexpr Index T = 12;

Targets random_targets(Rng& rng, Index agents = 3, bool gaps = false) {
  Targets t;
  t.focal_future = Eigen::MatrixX2d(T, 2);
  t.focal_valid.assign(T, 1);
  for (Index i = 0; i < T; ++i) {
    t.focal_future.row(i) << rng.uniform(-8, 8), rng.uniform(-8, 8);
    if (gaps && i > 0 && rng.uniform() < 0.3) t.focal_valid[static_cast<std::size_t>(i)] = 0;
  }
  t.aux_future = RowMat<double>::Zero(agents * T, 2);
  t.aux_valid.assign(static_cast<std::size_t>(agents * T), 0);
  for (Index n = 1; n < agents; ++n)
    for (Index i = 0; i < T; ++i) {
      t.aux_future.row(n * T + i) << rng.uniform(-8, 8), rng.uniform(-8, 8);
      t.aux_valid[static_cast<std::size_t>(n * T + i)] = !gaps || rng.uniform() < 0.7;
    }
  return t;
}

double smooth_l1(double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }

double oracle_regression(const Tensor<double>& traj, Index k, const Targets& t) {
  double s = 0;
  int n = 0;
  for (Index i = 0; i < T; ++i) {
    if (!t.focal_valid[static_cast<std::size_t>(i)]) continue;
    for (Index c = 0; c < 2; ++c) s += smooth_l1(traj.value()[(k * T + i) * 2 + c] - t.focal_future(i, c));
    ++n;
  }
  return s / (2.0 * n);
}

}  // namespace

TEST_CASE("winner is the mode with the smallest masked average error") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Targets t = random_targets(rng, 1, true);
    const Vec<double> traj = random_values(rng, K * T * 2, -8, 8);
    Index best = 0;
    double best_err = 1e300;
    for (Index k = 0; k < K; ++k) {
      double e = 0;
      for (Index i = 0; i < T; ++i)
        if (t.focal_valid[static_cast<std::size_t>(i)])
          e += std::hypot(traj[(k * T + i) * 2] - t.focal_future(i, 0), traj[(k * T + i) * 2 + 1] - t.focal_future(i, 1));
      if (e < best_err) best_err = e, best = k;
    }
    CHECK(select_winner(traj.data(), K, T, t.focal_future, t.focal_valid) == best);
  }
}

TEST_CASE("winner ties go to the lowest index and empty futures are rejected") {
  Rng rng(2);
  Targets t = random_targets(rng, 1);
  Vec<double> traj = random_values(rng, K * T * 2, -8, 8);
  for (Index k : {2, 4})
    for (Index i = 0; i < T; ++i) traj.segment((k * T + i) * 2, 2) = t.focal_future.row(i).transpose();
  CHECK(select_winner(traj.data(), K, T, t.focal_future, t.focal_valid) == 2);
  std::fill(t.focal_valid.begin(), t.focal_valid.end(), 0);
  CHECK_THROWS_AS(select_winner(traj.data(), K, T, t.focal_future, t.focal_valid), std::invalid_argument);
}

TEST_CASE("loss components match a scalar oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Targets t = random_targets(rng, 4, trial % 2 == 1);
    const auto traj = random_param(rng, {K, T, 2}, -8, 8);
    const auto logits = random_param(rng, {K}, -2, 2);
    const auto aux = random_param(rng, {4, T, 2}, -8, 8);
    const auto r = wta_loss(traj, logits, aux, t);
    CHECK(r.regression.item() == doctest::Approx(oracle_regression(traj, r.winner, t)).epsilon(1e-12));
    double z = 0;
    for (Index k = 0; k < K; ++k) z += std::exp(logits.value()[k]);
    CHECK(r.classification.item() == doctest::Approx(std::log(z) - logits.value()[r.winner]).epsilon(1e-12));
    double a = 0;
    int n = 0;
    for (Index i = 0; i < 4 * T; ++i) {
      if (!t.aux_valid[static_cast<std::size_t>(i)]) continue;
      for (Index c = 0; c < 2; ++c) a += smooth_l1(aux.value()[i * 2 + c] - t.aux_future(i, c));
      ++n;
    }
    CHECK(r.auxiliary.item() == doctest::Approx(a / (2.0 * n)).epsilon(1e-12));
    CHECK(r.total.item() == doctest::Approx(r.regression.item() + r.classification.item() + r.auxiliary.item()));
    CHECK(r.regression.item() >= 0.0);
    CHECK(r.classification.item() >= 0.0);
    CHECK(r.auxiliary.item() >= 0.0);
  }
}

TEST_CASE("uniform logits cost ln K") {
  Rng rng(4);
  const Targets t = random_targets(rng);
  const auto r = wta_loss(random_param(rng, {K, T, 2}), Tensor<double>::zeros({K}), Tensor<double>(), t);
  CHECK(r.classification.item() == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(r.auxiliary.item() == 0.0);
}

TEST_CASE("an exact, certain winner leaves only the auxiliary term") {
  Rng rng(5);
  const Targets t = random_targets(rng);
  Vec<double> v = random_values(rng, K * T * 2, -8, 8);
  for (Index i = 0; i < T; ++i) v.segment((3 * T + i) * 2, 2) = t.focal_future.row(i).transpose();
  Vec<double> l = Vec<double>::Zero(K);
  l[3] = 60.0;
  const auto aux = random_param(rng, {3, T, 2});
  const auto r = wta_loss(Tensor<double>::parameter({K, T, 2}, v), Tensor<double>::parameter({K}, l), aux, t);
  CHECK(r.winner == 3);
  CHECK(r.regression.item() == 0.0);
  CHECK(r.classification.item() < 1e-24);
  CHECK(r.total.item() == doctest::Approx(r.auxiliary.item()).epsilon(1e-12));
}

TEST_CASE("only the winning mode receives regression gradient") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Targets t = random_targets(rng);
    const auto traj = random_param(rng, {K, T, 2}, -8, 8);
    const auto logits = random_param(rng, {K});
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const auto r = wta_loss(traj, logits, Tensor<double>(), t);
    tape.backward(r.regression);
    const Vec<double> g = traj.grad();
    for (Index k = 0; k < K; ++k) {
      const double norm = g.segment(k * T * 2, T * 2).matrix().norm();
      if (k == r.winner)
        CHECK(norm > 0.0);
      else
        CHECK(norm == 0.0);
    }
  }
}

TEST_CASE("padded future steps do not affect the loss") {
  Rng rng(7);
  const Targets t = random_targets(rng, 3, true);
  Targets moved = t;
  for (Index i = 0; i < T; ++i)
    if (!t.focal_valid[static_cast<std::size_t>(i)]) moved.focal_future.row(i) << 1e3, -1e3;
  for (Index i = 0; i < 3 * T; ++i)
    if (!t.aux_valid[static_cast<std::size_t>(i)]) moved.aux_future.row(i) << -1e3, 1e3;
  const auto traj = random_param(rng, {K, T, 2});
  const auto logits = random_param(rng, {K});
  const auto aux = random_param(rng, {3, T, 2});
  CHECK(wta_loss(traj, logits, aux, t).total.item() == wta_loss(traj, logits, aux, moved).total.item());
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(8);
  const Targets t = random_targets(rng, 3, true);
  // Large spread keeps the winner fixed under small perturbations.
  Vec<double> v = random_values(rng, K * T * 2, -20, 20);
  for (Index i = 0; i < T; ++i)
    v.segment((1 * T + i) * 2, 2) = t.focal_future.row(i).transpose().array() + random_values(rng, 2, -1.5, 1.5);
  const auto traj = Tensor<double>::parameter({K, T, 2}, v);
  const auto logits = random_param(rng, {K});
  const auto aux = random_param(rng, {3, T, 2}, -8, 8);
  const double err = gradient_error({traj, logits, aux}, [&](const std::vector<Tensor<double>>& in) {
    return wta_loss(in[0], in[1], in[2], t).total;
  });
  CHECK(err < 1e-6);
}

TEST_CASE("targets exclude the focal agent and unobserved agents from the auxiliary set") {
  Scenario s = generate_scenario(11, Maneuver::left_turn, 4, 6);
  for (Index t = 0; t < s.history_steps; ++t) s.agents[2].valid[static_cast<std::size_t>(t)] = 0;
  const NormalizedScene ns = normalize_to_focal(s);
  const Targets tg = extract_targets(ns.scene);
  const Index Tf = s.future_steps;
  for (Index i = 0; i < Tf; ++i) {
    CHECK(tg.aux_valid[static_cast<std::size_t>(ns.scene.focal_index * Tf + i)] == 0);
    CHECK(tg.aux_valid[static_cast<std::size_t>(2 * Tf + i)] == 0);
    const auto future = static_cast<std::size_t>(s.history_steps + i);
    CHECK(tg.focal_valid[static_cast<std::size_t>(i)] == ns.scene.focal().valid[future]);
  }
  const Index other = ns.scene.focal_index == 1 ? 3 : 1;
  bool any = false;
  for (Index i = 0; i < Tf; ++i) any = any || tg.aux_valid[static_cast<std::size_t>(other * Tf + i)];
  CHECK(any);
}
