#include "hamf/model.hpp"

#include <cmath>

namespace hamf {

std::string_view to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::full: return "full";
    case EncoderVariant::self_only: return "self_only";
    case EncoderVariant::cross_only: return "cross_only";
    case EncoderVariant::no_interaction: return "no_interaction";
    case EncoderVariant::reversed: return "reversed";
    case EncoderVariant::parallel: return "parallel";
    case EncoderVariant::no_motion_tokens: return "no_motion_tokens";
  }
  return "full";
}

std::string_view to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::uni_mamba: return "uni_mamba";
    case DecoderKind::bi_mamba: return "bi_mamba";
    case DecoderKind::attention: return "attention";
    case DecoderKind::none: return "none";
  }
  return "none";
}

EncoderVariant parse_encoder_variant(std::string_view s) {
  struct Alias {
    std::string_view label;
    EncoderVariant variant;
  };
  static constexpr Alias aliases[] = {{"M1", EncoderVariant::self_only},      {"M2", EncoderVariant::cross_only},
                                      {"M3", EncoderVariant::no_interaction}, {"Mc", EncoderVariant::reversed},
                                      {"Mp", EncoderVariant::parallel},       {"Mb", EncoderVariant::no_motion_tokens}};
  for (const auto& a : aliases)
    if (a.label == s) return a.variant;
  for (auto v : {EncoderVariant::full, EncoderVariant::self_only, EncoderVariant::cross_only,
                 EncoderVariant::no_interaction, EncoderVariant::reversed, EncoderVariant::parallel,
                 EncoderVariant::no_motion_tokens})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown encoder variant: " + std::string(s));
}

DecoderKind parse_decoder_kind(std::string_view s) {
  for (auto k : {DecoderKind::uni_mamba, DecoderKind::bi_mamba, DecoderKind::attention, DecoderKind::none})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown decoder kind: " + std::string(s));
}

SsmConfig ModelConfig::ssm() const {
  SsmConfig c;
  c.d_model = d_model;
  c.expand = expand;
  c.d_state = d_state;
  c.conv_width = conv_width;
  return c;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* field, const std::string& why) {
    if (!ok) throw std::invalid_argument(std::string("model config: ") + field + " " + why);
  };
  require(d_model >= 1, "d_model", "must be >= 1");
  require(n_heads >= 1 && d_model % n_heads == 0, "n_heads", "must divide d_model");
  require(encoder_layers >= 1, "encoder_layers", "must be >= 1");
  require(motion_tokens >= 1, "motion_tokens", "must be >= 1");
  require(modes >= 1, "modes", "must be >= 1");
  require(motion_tokens <= modes, "motion_tokens", "must not exceed modes");
  require(decoder == DecoderKind::none || decoder_depth >= 1, "decoder_depth", "must be >= 1");
  require(ffn_mult >= 1 && head_hidden >= 1 && map_hidden >= 1, "widths", "must be >= 1");
  require(agent_blocks >= 0 && pe_frequencies >= 1, "embedding", "sizes out of range");
  require(d_state >= 1 && expand >= 1 && conv_width >= 1, "ssm", "sizes must be >= 1");
  require(history_steps >= 1 && future_steps >= 1, "horizons", "must be >= 1");
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 4;
  c.encoder_layers = 2;
  c.motion_tokens = 3;
  c.modes = 6;
  c.head_hidden = 16;
  c.map_hidden = 8;
  c.pe_frequencies = 4;
  c.d_state = 4;
  c.history_steps = 10;
  c.future_steps = 12;
  return c;
}

ModelConfig desk_model_config() {
  ModelConfig c;
  c.d_model = 64;
  c.n_heads = 4;
  c.encoder_layers = 3;
  c.head_hidden = 64;
  c.map_hidden = 32;
  c.pe_frequencies = 16;
  return c;
}

template <typename Scalar>
MotionDecoder<Scalar>::MotionDecoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config,
                                     Rng& rng)
    : kind_(config.decoder), scan_(config.scan) {
  if (kind_ == DecoderKind::none) return;
  for (Index d = 0; d < config.decoder_depth; ++d) {
    const std::string p = name + "." + std::to_string(d);
    switch (kind_) {
      case DecoderKind::uni_mamba: uni_.emplace_back(params, p, config.ssm(), rng); break;
      case DecoderKind::bi_mamba: bi_.emplace_back(params, p, config.ssm(), rng); break;
      case DecoderKind::attention: attn_.emplace_back(params, p, config, rng); break;
      case DecoderKind::none: break;
    }
  }
}

template <typename Scalar>
Tensor<Scalar> MotionDecoder<Scalar>::operator()(const Tensor<Scalar>& tokens) const {
  const Index k = tokens.dim(0);
  const Index c = tokens.dim(1);
  Tensor<Scalar> x = reshape(tokens, {1, k, c});
  for (const auto& b : uni_) x = b(x, nullptr, scan_);
  for (const auto& b : bi_) x = b(x, scan_);
  x = reshape(x, {k, c});
  for (const auto& b : attn_) x = b(x, nullptr);
  return x;
}

template <typename Scalar>
TrajectoryHead<Scalar>::TrajectoryHead(ParameterSet<Scalar>& params, const std::string& name, Index dim,
                                       Index hidden, Index steps, Rng& rng)
    : mlp_(params, name, dim, hidden, steps * 2, rng), steps_(steps) {
  Vec<Scalar> u = Vec<Scalar>::Zero(steps * steps);
  for (Index i = 0; i < steps; ++i)
    for (Index j = i; j < steps; ++j) u[i * steps + j] = Scalar(1);
  cumulative_ = Tensor<Scalar>::constant({steps, steps}, std::move(u));
}

template <typename Scalar>
Tensor<Scalar> TrajectoryHead<Scalar>::operator()(const Tensor<Scalar>& tokens, const RowMat<double>& origins) const {
  const Index n = tokens.dim(0);
  const Tensor<Scalar> steps = transpose(reshape(mlp_(tokens), {n, steps_, 2}), 1, 2);
  Tensor<Scalar> positions = transpose(matmul(steps, cumulative_), 1, 2);
  if (origins.size() == 0) return positions;
  Vec<Scalar> offset(n * steps_ * 2);
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < steps_; ++t) {
      offset[(i * steps_ + t) * 2] = static_cast<Scalar>(origins(i, 0));
      offset[(i * steps_ + t) * 2 + 1] = static_cast<Scalar>(origins(i, 1));
    }
  return add(positions, Tensor<Scalar>::constant({n, steps_, 2}, std::move(offset)));
}

template <typename Scalar>
HamfModel<Scalar>::HamfModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const Index C = config_.d_model;
  embedding_ = SceneEmbedding<Scalar>(params_, "embed", config_, rng);
  if (config_.variant == EncoderVariant::no_motion_tokens)
    motion_from_focal_ = Linear<Scalar>(params_, "motion_from_focal", C, config_.motion_tokens * C, rng);
  else
    motion_tokens_ = params_.add_normal("motion_tokens", {config_.motion_tokens, C}, rng);
  encoder_ = Encoder<Scalar>(params_, "encoder", config_, rng);
  decoder_ = MotionDecoder<Scalar>(params_, "decoder", config_, rng);
  if (config_.motion_tokens < config_.modes)
    mode_projection_ = params_.add_normal("mode_projection", {config_.motion_tokens, config_.modes}, rng,
                                          1.0 / std::sqrt(static_cast<double>(config_.motion_tokens)));
  trajectory_head_ = TrajectoryHead<Scalar>(params_, "head.trajectory", C, config_.head_hidden,
                                            config_.future_steps, rng);
  probability_head_ = Mlp2<Scalar>(params_, "head.probability", C, config_.head_hidden, 1, rng);
  if (config_.aux_head)
    aux_head_ = TrajectoryHead<Scalar>(params_, "head.aux", C, config_.head_hidden, config_.future_steps, rng);
}

template <typename Scalar>
Tensor<Scalar> HamfModel<Scalar>::project_modes(const Tensor<Scalar>& tokens) const {
  if (!mode_projection_.defined()) return tokens;
  return transpose(matmul(transpose(tokens, 0, 1), mode_projection_), 0, 1);
}

template <typename Scalar>
ModelOutput<Scalar> HamfModel<Scalar>::forward(const SceneFeatures& features) const {
  if (features.history_steps != config_.history_steps)
    throw ShapeError("model", "scene has " + std::to_string(features.history_steps) +
                                  " history steps, model expects " + std::to_string(config_.history_steps));
  if (features.focal < 0 || features.focal >= features.agents)
    throw std::invalid_argument("model: focal index out of range");
  ModelOutput<Scalar> out;
  const SceneTokens<Scalar> scene = embedding_(features);
  Tensor<Scalar> f0 = motion_tokens_;
  if (f0.defined() && config_.motion_token_pe) {
    RowMat<double> focal_pose = features.poses.row(features.focal);
    f0 = add(f0, embedding_.positional(focal_pose));
  }
  out.encoder = encoder_(f0, scene.tokens, scene.valid);
  Tensor<Scalar> f_l = out.encoder.motion;
  if (config_.variant == EncoderVariant::no_motion_tokens) {
    const Tensor<Scalar> focal = index_select(out.encoder.scene, 0, {features.focal});
    f_l = reshape(motion_from_focal_(focal), {config_.motion_tokens, config_.d_model});
    f0 = f_l;
  }
  out.motion_initial = f0;
  const Tensor<Scalar> decoded = project_modes(decoder_(f_l));
  out.decoded = decoded;
  out.trajectories = trajectory_head_(decoded);
  const Tensor<Scalar> prob_in = config_.probabilities_after_decoder ? decoded : project_modes(f_l);
  out.logits = reshape(probability_head_(prob_in), {config_.modes});
  out.probabilities = softmax(out.logits);
  if (config_.aux_head && features.agents > 0) {
    RowMat<double> origins = features.poses.topRows(features.agents).leftCols(2);
    out.aux = aux_head_(slice(out.encoder.scene, 0, 0, features.agents), origins);
  }
  return out;
}

template <typename Scalar>
PredictionSet HamfModel<Scalar>::predict(const Scenario& scenario) const {
  const NormalizedScene normalized = normalize_to_focal(scenario);
  const ModelOutput<Scalar> out = forward(extract_features(normalized.scene));
  PredictionSet p;
  p.scenario_id = scenario.id;
  const Index T = config_.future_steps;
  const auto& traj = out.trajectories.value();
  for (Index k = 0; k < config_.modes; ++k) {
    Eigen::MatrixX2d m(T, 2);
    for (Index t = 0; t < T; ++t) {
      m(t, 0) = static_cast<double>(traj[(k * T + t) * 2]);
      m(t, 1) = static_cast<double>(traj[(k * T + t) * 2 + 1]);
    }
    p.trajectories.push_back(std::move(m));
    p.probabilities.push_back(static_cast<double>(out.probabilities.value()[k]));
  }
  return denormalize_predictions(p, normalized.transform);
}

Index count_parameters(const ModelConfig& config) { return HamfModel<float>(config, 0).parameter_count(); }

template class MotionDecoder<float>;
template class MotionDecoder<double>;
template class TrajectoryHead<float>;
template class TrajectoryHead<double>;
template class HamfModel<float>;
template class HamfModel<double>;

}  // namespace hamf
