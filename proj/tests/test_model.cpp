#include "scenario_util.hpp"

using namespace hamf;
using namespace hamf::testing;

namespace {

SceneFeatures focal_features(const Scenario& s) { return extract_features(normalize_to_focal(s).scene); }

ModelConfig paper_config() { return ModelConfig{}; }

}  // namespace

TEST_CASE("forward produces the documented shapes and a distribution over modes") {
  const HamfModel<double> model(tiny_model_config(), 1);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Scenario s = small_scenario(seed);
    const auto out = model.forward(focal_features(s));
    CHECK(out.trajectories.shape() == Shape{6, 12, 2});
    CHECK(out.logits.shape() == Shape{6});
    CHECK(out.aux.shape() == Shape{5, 12, 2});
    CHECK(out.motion_initial.shape() == Shape{3, 16});
    CHECK(out.decoded.shape() == Shape{6, 16});
    CHECK(out.probabilities.value().sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((out.probabilities.value() > 0.0).all());
  }
}

TEST_CASE("trajectory head accumulates per-step displacements from its origin") {
  ParameterSet<double> params;
  Rng rng(3);
  const TrajectoryHead<double> head(params, "h", 8, 16, 12, rng);
  const auto tokens = Tensor<double>::constant({4, 8}, random_values(rng, 32));
  const auto steps = head.mlp()(tokens);  // [4, 24], interleaved (x, y) per step
  RowMat<double> origins(4, 2);
  origins << 1, 2, -3, 4, 5, -6, 0.5, 0.25;
  const auto pos = head(tokens, origins);
  const auto rel = head(tokens);
  for (Index n = 0; n < 4; ++n) {
    double x = 0, y = 0;
    for (Index t = 0; t < 12; ++t) {
      x += steps.value()[n * 24 + t * 2];
      y += steps.value()[n * 24 + t * 2 + 1];
      CHECK(rel.value()[(n * 12 + t) * 2] == doctest::Approx(x).epsilon(1e-12));
      CHECK(rel.value()[(n * 12 + t) * 2 + 1] == doctest::Approx(y).epsilon(1e-12));
      CHECK(pos.value()[(n * 12 + t) * 2] == doctest::Approx(x + origins(n, 0)).epsilon(1e-12));
      CHECK(pos.value()[(n * 12 + t) * 2 + 1] == doctest::Approx(y + origins(n, 1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("parameter counts of the reference configuration") {
  const ModelConfig c = paper_config();
  const Index n = count_parameters(c);
  CHECK(n == 2509745);
  CHECK(n >= 2500000);
  CHECK(n <= 3500000);
  const HamfModel<float> model(c, 0);
  Index sum = 0;
  for (const auto& e : model.parameters().entries()) sum += e.tensor.numel();
  CHECK(sum == n);
  Index last = 0;
  for (Index layers : {4, 5, 6}) {
    ModelConfig d = c;
    d.encoder_layers = layers;
    const Index count = count_parameters(d);
    CHECK(count > last);
    last = count;
  }
  ModelConfig four = c, six = c;
  four.encoder_layers = 4;
  six.encoder_layers = 6;
  CHECK(count_parameters(four) == 2112689);
  CHECK(count_parameters(six) == 2906801);
}

TEST_CASE("mode projection exists only when there are fewer motion tokens than modes") {
  ModelConfig c = tiny_model_config();
  CHECK(HamfModel<float>(c, 0).parameters().find("mode_projection") != nullptr);
  c.motion_tokens = 6;
  const HamfModel<float> same(c, 0);
  CHECK(same.parameters().find("mode_projection") == nullptr);
  const auto out = same.forward(focal_features(small_scenario(0)));
  CHECK(out.motion_initial.shape() == Shape{6, 16});
}

TEST_CASE("the no-motion-token baseline derives its queries from the focal token") {
  ModelConfig c = tiny_model_config();
  c.variant = EncoderVariant::no_motion_tokens;
  const HamfModel<double> model(c, 4);
  CHECK(model.parameters().find("motion_tokens") == nullptr);
  CHECK(model.parameters().find("motion_from_focal.weight") != nullptr);
  const SceneFeatures f = focal_features(small_scenario(2));
  const auto out = model.forward(f);
  CHECK(out.trajectories.shape() == Shape{6, 12, 2});
  CHECK(out.probabilities.value().sum() == doctest::Approx(1.0));
}

TEST_CASE("every decoder kind and depth runs and registers its blocks") {
  const SceneFeatures f = focal_features(small_scenario(3));
  Index prev_bi = 0;
  for (DecoderKind kind : {DecoderKind::none, DecoderKind::uni_mamba, DecoderKind::bi_mamba, DecoderKind::attention})
    for (Index depth : {1, 2, 3}) {
      ModelConfig c = tiny_model_config();
      c.decoder = kind;
      c.decoder_depth = depth;
      const HamfModel<double> model(c, 5);
      const auto out = model.forward(f);
      CHECK(out.trajectories.shape() == Shape{6, 12, 2});
      const Index dec = model.parameters().count_with_prefix("decoder.");
      if (kind == DecoderKind::none) {
        CHECK(dec == 0);
      } else {
        CHECK(dec > 0);
        CHECK(model.parameters().count_with_prefix("decoder." + std::to_string(depth - 1) + ".") > 0);
        CHECK(model.parameters().count_with_prefix("decoder." + std::to_string(depth) + ".") == 0);
      }
      if (kind == DecoderKind::bi_mamba) {
        CHECK(dec > prev_bi);
        prev_bi = dec;
      }
    }
}

TEST_CASE("without a decoder the heads read the encoder's motion tokens") {
  ModelConfig c = tiny_model_config();
  c.decoder = DecoderKind::none;
  c.motion_tokens = 6;
  const HamfModel<double> model(c, 6);
  const auto out = model.forward(focal_features(small_scenario(1)));
  CHECK((out.decoded.value() - out.encoder.motion.value()).abs().maxCoeff() == 0.0);
}

TEST_CASE("probabilities can read the encoder output instead of the decoder") {
  ModelConfig c = tiny_model_config();
  const SceneFeatures f = focal_features(small_scenario(4));
  const HamfModel<double> after(c, 7);
  c.probabilities_after_decoder = false;
  const HamfModel<double> before(c, 7);
  const auto a = after.forward(f), b = before.forward(f);
  CHECK((a.trajectories.value() - b.trajectories.value()).abs().maxCoeff() == 0.0);
  CHECK((a.logits.value() - b.logits.value()).abs().maxCoeff() > 0.0);
}

TEST_CASE("auxiliary predictions start from each agent's last observed position") {
  const HamfModel<double> model(tiny_model_config(), 8);
  const SceneFeatures f = focal_features(small_scenario(5));
  const auto out = model.forward(f);
  CHECK(out.aux.defined());
  // Distant agents make a missing origin offset visible.
  Index checked = 0;
  for (Index n = 0; n < f.agents; ++n) {
    if (f.agent_last[static_cast<std::size_t>(n)] < 0) continue;
    const Point2 origin(f.poses(n, 0), f.poses(n, 1));
    if (origin.norm() < 5.0) continue;
    const Point2 first(out.aux.value()[n * 24], out.aux.value()[n * 24 + 1]);
    CHECK((first - origin).norm() < 0.5 * origin.norm());
    ++checked;
  }
  CHECK(checked > 0);
  ModelConfig c = tiny_model_config();
  c.aux_head = false;
  CHECK_FALSE(HamfModel<double>(c, 8).forward(f).aux.defined());
}

TEST_CASE("predict maps the normalized forward pass back to the scenario frame") {
  const HamfModel<double> model(tiny_model_config(), 9);
  const Scenario s = small_scenario(6);
  const NormalizedScene ns = normalize_to_focal(s);
  const auto out = model.forward(extract_features(ns.scene));
  const PredictionSet p = model.predict(s);
  CHECK(p.scenario_id == s.id);
  REQUIRE(p.modes() == 6);
  for (Index k = 0; k < 6; ++k) {
    CHECK(p.probabilities[static_cast<std::size_t>(k)] == out.probabilities.value()[k]);
    for (Index t = 0; t < 12; ++t) {
      const Point2 local(out.trajectories.value()[(k * 12 + t) * 2], out.trajectories.value()[(k * 12 + t) * 2 + 1]);
      const Point2 global = ns.transform.to_global(local);
      CHECK((p.trajectories[static_cast<std::size_t>(k)].row(t).transpose() - global).norm() < 1e-12);
    }
  }
}

TEST_CASE("construction is deterministic in the seed") {
  const HamfModel<float> a(tiny_model_config(), 10), b(tiny_model_config(), 10), c(tiny_model_config(), 11);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& x = a.parameters().entries()[i];
    CHECK(x.name == b.parameters().entries()[i].name);
    CHECK((x.tensor.value() == b.parameters().entries()[i].tensor.value()).all());
    differs = differs || (x.tensor.value() != c.parameters().entries()[i].tensor.value()).any();
  }
  CHECK(differs);
  const Scenario s = small_scenario(7);
  CHECK(max_prediction_gap(a.predict(s), b.predict(s)) == 0.0);
}

TEST_CASE("an agent with no observed step does not change the focal forecast") {
  const HamfModel<double> model(tiny_model_config(), 12);
  const Scenario s = small_scenario(8);
  Scenario ghost = s;
  AgentTrack extra = s.agents[s.focal_index == 0 ? 1 : 0];
  for (Index t = 0; t < s.history_steps; ++t) extra.valid[static_cast<std::size_t>(t)] = 0;
  ghost.agents.push_back(extra);
  const PredictionSet a = model.predict(s), b = model.predict(ghost);
  CHECK(max_prediction_gap(a, b) < 1e-12);
  CHECK(max_probability_gap(a, b) < 1e-12);
}

TEST_CASE("forecasts are invariant to agent and polyline order") {
  const HamfModel<double> model(tiny_model_config(), 13);
  Rng rng(14);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Scenario s = small_scenario(seed);
    const PredictionSet a = model.predict(s), b = model.predict(permute_scenario(s, rng));
    CHECK(max_prediction_gap(a, b) < 1e-9);
    CHECK(max_probability_gap(a, b) < 1e-12);
  }
}

TEST_CASE("forecasts follow rigid motions of the whole scene") {
  const HamfModel<float> model(tiny_model_config(), 15);
  Rng rng(16);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Scenario s = small_scenario(seed);
    const RigidTransform t = random_transform(rng);
    const PredictionSet moved = model.predict(transform_scenario(s, t));
    const PredictionSet expect = denormalize_predictions(model.predict(s), t);
    CHECK(max_prediction_gap(moved, expect) < 1e-4);
    CHECK(max_probability_gap(moved, expect) < 1e-5);
  }
}

TEST_CASE("end-to-end gradients match finite differences on sampled parameters") {
  HamfModel<double> model(tiny_model_config(), 17);
  const std::vector<Scenario> scenes{small_scenario(20), small_scenario(23)};
  const auto probes = sampled_model_gradients(model, scenes, 40, 18);
  double worst = 0;
  for (const auto& p : probes) {
    INFO(p.name << "[" << p.index << "] analytic " << p.analytic << " numeric " << p.numeric);
    CHECK(p.error < 1e-5);
    worst = std::max(worst, p.error);
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("forward rejects a mismatched history length") {
  const HamfModel<float> model(tiny_model_config(), 0);
  const Scenario s = generate_scenario(1, Maneuver::straight, 3, 4);
  CHECK_THROWS_AS(model.forward(focal_features(s)), ShapeError);
  ModelConfig bad = tiny_model_config();
  bad.motion_tokens = 7;
  CHECK_THROWS_AS(HamfModel<float>(bad, 0), std::invalid_argument);
}
