#include "test_util.hpp"

#include <numbers>

#include "hamf/embedding.hpp"

using namespace hamf;
using namespace hamf::testing;

namespace {

ModelConfig small_config() {
  ModelConfig c = tiny_model_config();
  c.d_model = 8;
  c.n_heads = 2;
  c.map_hidden = 6;
  c.d_state = 3;
  return c;
}

Scenario small_scene(std::uint64_t seed, Index agents = 4, Index polylines = 5) {
  GeneratorOptions opt;
  opt.history_steps = 10;
  opt.future_steps = 12;
  return normalize_to_focal(generate_scenario(seed, all_maneuvers()[seed % 6], agents, polylines, opt)).scene;
}

void jitter(ParameterSet<double>& params, Rng& rng) {
  for (auto& e : params.entries()) e.tensor.mutable_value() += random_values(rng, e.tensor.numel(), -0.3, 0.3);
}

std::vector<Tensor<double>> all_params(ParameterSet<double>& params) {
  std::vector<Tensor<double>> in;
  for (auto& e : params.entries()) in.push_back(e.tensor);
  return in;
}

}  // namespace

TEST_CASE("feature extraction fills every channel consistently") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Scenario s = small_scene(seed);
    const SceneFeatures f = extract_features(s);
    const Index T = s.history_steps;
    CHECK(f.agent_steps.rows() == f.agents * T);
    CHECK(f.map_points.rows() == f.polylines * kPolylinePoints);
    CHECK(f.poses.rows() == f.tokens());
    CHECK(f.poses.row(f.focal).isApprox(Eigen::RowVector4d(0, 0, 1, 0).cast<double>(), 1e-12));
    for (Index n = 0; n < f.agents; ++n) {
      const AgentTrack& a = s.agents[static_cast<std::size_t>(n)];
      for (Index t = 0; t < T; ++t) {
        const auto row = f.agent_steps.row(n * T + t);
        const bool valid = a.valid[static_cast<std::size_t>(t)];
        CHECK(row(4) == (valid ? 1.0 : 0.0));
        CHECK(f.agent_step_valid[static_cast<std::size_t>(n * T + t)] == valid);
        if (!valid) CHECK(row.isZero());
        if (valid && t > 0 && !a.valid[static_cast<std::size_t>(t - 1)]) CHECK(row.head<2>().isZero());
        if (valid) CHECK(std::hypot(row(2), row(3)) == doctest::Approx(1.0));
      }
    }
    for (Index m = 0; m < f.polylines; ++m)
      for (Index k = 0; k < kPolylinePoints; ++k) {
        const auto row = f.map_points.row(m * kPolylinePoints + k);
        if (f.map_point_valid[static_cast<std::size_t>(m * kPolylinePoints + k)]) {
          CHECK(row.segment<3>(4).sum() == 1.0);
          CHECK(row(4 + f.lane_type[static_cast<std::size_t>(m)]) == 1.0);
        } else {
          CHECK(row.isZero());
        }
      }
  }
}

TEST_CASE("an agent with no observed step becomes an absent token") {
  Scenario s = small_scene(3);
  AgentTrack& a = s.agents[(static_cast<std::size_t>(s.focal_index) + 1) % s.agents.size()];
  for (Index t = 0; t < s.history_steps; ++t) {
    a.valid[static_cast<std::size_t>(t)] = 0;
    a.positions[static_cast<std::size_t>(t)] = Point2::Zero();
    a.headings[static_cast<std::size_t>(t)] = 0.0;
  }
  const SceneFeatures f = extract_features(s);
  const Index n = (s.focal_index + 1) % static_cast<Index>(s.agents.size());
  CHECK(f.agent_last[static_cast<std::size_t>(n)] == -1);
  CHECK_FALSE(f.token_valid[static_cast<std::size_t>(n)]);
  CHECK(f.poses.row(n).isApprox(Eigen::RowVector4d(0, 0, 1, 0)));

  Rng rng(1);
  ParameterSet<double> params;
  AgentEncoder<double> enc(params, "agent", small_config(), rng);
  const auto steps = to_tensor<double>(f.agent_steps, {f.agents, f.history_steps, kAgentChannels});
  const auto tokens = enc(steps, f.agent_step_valid, f.agent_last);
  const auto absent = params.find("agent.absent");
  REQUIRE(absent);
  CHECK((tokens.value().segment(n * 8, 8) - absent->value()).abs().maxCoeff() < 1e-15);
}

TEST_CASE("fourier features use log-spaced frequencies over scaled positions") {
  RowMat<double> pose(1, 4);
  pose << 50.0, -25.0, 0.6, 0.8;
  const Index F = 5;
  const RowMat<double> ff = fourier_features(pose, F);
  REQUIRE(ff.cols() == 4 * 2 * F);
  for (Index c = 0; c < 4; ++c)
    for (Index k = 0; k < F; ++k) {
      const double w = std::numbers::pi * std::pow(2.0, 7.0 * static_cast<double>(k) / static_cast<double>(F - 1));
      const double v = c < 2 ? pose(0, c) / 100.0 : pose(0, c);
      CHECK(ff(0, c * 2 * F + k) == doctest::Approx(std::sin(w * v)).epsilon(1e-12));
      CHECK(ff(0, c * 2 * F + F + k) == doctest::Approx(std::cos(w * v)).epsilon(1e-12));
    }
  CHECK(std::abs(fourier_features(pose, 1)(0, 0) - std::sin(std::numbers::pi * 0.5)) < 1e-12);
}

TEST_CASE("polyline encoder ignores point order and padded points") {
  Rng rng(2);
  ParameterSet<double> params;
  PolylineEncoder<double> enc(params, "map", small_config(), rng);
  jitter(params, rng);
  const Index M = 3, L = 6;
  auto pts = random_param(rng, {M, L, kMapChannels});
  Mask valid(static_cast<std::size_t>(M * L), 1);
  valid[4] = valid[5] = valid[8] = 0;
  const auto y = enc(pts, valid);
  CHECK(y.shape() == Shape{M, 8});

  const std::vector<Index> perm = {5, 3, 1, 0, 4, 2};
  std::vector<Index> rows;
  Mask pvalid;
  for (Index m = 0; m < M; ++m)
    for (Index k : perm) {
      rows.push_back(m * L + k);
      pvalid.push_back(valid[static_cast<std::size_t>(m * L + k)]);
    }
  const auto permuted = reshape(index_select(reshape(pts, {M * L, kMapChannels}), 0, rows), {M, L, kMapChannels});
  CHECK((enc(permuted, pvalid).value() - y.value()).abs().maxCoeff() < 1e-12);

  pts.mutable_value().segment(4 * kMapChannels, kMapChannels) += 100.0;
  CHECK((enc(pts, valid).value() - y.value()).abs().maxCoeff() == 0.0);

  Mask empty = valid;
  for (Index k = 0; k < L; ++k) empty[static_cast<std::size_t>(L + k)] = 0;
  CHECK_THROWS(enc(pts, empty));
}

TEST_CASE("agent tokens are the encoder output at the last observed step") {
  Rng rng(3);
  ParameterSet<double> params;
  AgentEncoder<double> enc(params, "agent", small_config(), rng);
  const SceneFeatures f = extract_features(small_scene(5));
  const auto steps = to_tensor<double>(f.agent_steps, {f.agents, f.history_steps, kAgentChannels});
  Tensor<double> seq;
  const auto tokens = enc(steps, f.agent_step_valid, f.agent_last, &seq);
  for (Index n = 0; n < f.agents; ++n) {
    const Index l = f.agent_last[static_cast<std::size_t>(n)];
    if (l < 0) continue;
    CHECK((tokens.value().segment(n * 8, 8) - seq.value().segment((n * f.history_steps + l) * 8, 8)).abs().maxCoeff() == 0.0);
  }
  for (Index i = 0; i < f.agents * f.history_steps; ++i)
    if (!f.agent_step_valid[static_cast<std::size_t>(i)]) CHECK((seq.value().segment(i * 8, 8) == 0.0).all());
}

TEST_CASE("scene embedding is equivariant to agent and polyline order") {
  Rng rng(4);
  ParameterSet<double> params;
  SceneEmbedding<double> emb(params, "embed", small_config(), rng);
  jitter(params, rng);
  Scenario s = small_scene(6);
  const SceneTokens<double> a = emb(extract_features(s));
  CHECK(a.tokens.shape() == Shape{9, 8});

  Scenario p = s;
  std::reverse(p.agents.begin(), p.agents.end());
  p.focal_index = static_cast<Index>(s.agents.size()) - 1 - s.focal_index;
  std::rotate(p.map.begin(), p.map.begin() + 2, p.map.end());
  const SceneTokens<double> b = emb(extract_features(p));
  std::vector<Index> rows;
  for (Index n = 3; n >= 0; --n) rows.push_back(n);
  for (Index m = 0; m < 5; ++m) rows.push_back(4 + (m + 2) % 5);
  CHECK((index_select(a.tokens, 0, rows).value() - b.tokens.value()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("embedding gradients match finite differences") {
  Rng rng(5);
  const SceneFeatures f = extract_features(small_scene(7, 3, 3));
  SUBCASE("polyline encoder") {
    ParameterSet<double> params;
    PolylineEncoder<double> enc(params, "map", small_config(), rng);
    jitter(params, rng);
    const auto pts = to_tensor<double>(f.map_points, {f.polylines, kPolylinePoints, kMapChannels});
    CHECK(gradient_error(all_params(params), [&](auto&) { return probe(enc(pts, f.map_point_valid)); }) < 1e-6);
  }
  SUBCASE("agent encoder") {
    ParameterSet<double> params;
    AgentEncoder<double> enc(params, "agent", small_config(), rng);
    jitter(params, rng);
    const auto steps = to_tensor<double>(f.agent_steps, {f.agents, f.history_steps, kAgentChannels});
    CHECK(gradient_error(all_params(params), [&](auto&) { return probe(enc(steps, f.agent_step_valid, f.agent_last)); }) <
          1e-6);
  }
  SUBCASE("full scene embedding") {
    ParameterSet<double> params;
    SceneEmbedding<double> emb(params, "embed", small_config(), rng);
    jitter(params, rng);
    CHECK(gradient_error(all_params(params), [&](auto&) { return probe(emb(f).tokens); }) < 1e-6);
  }
}
