#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hamf/attention.hpp"
#include "hamf/embedding.hpp"

namespace hamf {

/// Sequence module over the motion tokens, applied in token index order.
template <typename Scalar>
class MotionDecoder {
 public:
  MotionDecoder() = default;
  MotionDecoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config, Rng& rng);

  /// tokens: [K_e, C] -> [K_e, C].
  Tensor<Scalar> operator()(const Tensor<Scalar>& tokens) const;

  DecoderKind kind() const { return kind_; }
  const std::vector<MambaBlock<Scalar>>& uni() const { return uni_; }
  const std::vector<BiMambaBlock<Scalar>>& bi() const { return bi_; }
  std::vector<BiMambaBlock<Scalar>>& bi() { return bi_; }

 private:
  DecoderKind kind_ = DecoderKind::uni_mamba;
  ScanAlgorithm scan_ = ScanAlgorithm::chunked;
  std::vector<MambaBlock<Scalar>> uni_;
  std::vector<BiMambaBlock<Scalar>> bi_;
  std::vector<SelfAttentionBlock<Scalar>> attn_;
};

/// Two-layer MLP emitting per-step displacements that are summed into
/// positions relative to an origin.
template <typename Scalar>
class TrajectoryHead {
 public:
  TrajectoryHead() = default;
  TrajectoryHead(ParameterSet<Scalar>& params, const std::string& name, Index dim, Index hidden, Index steps, Rng& rng);

  /// tokens: [n, C] -> [n, T_f, 2]. `origins` ([n, 2] row-major, may be
  /// empty for the zero origin) are added to every step.
  Tensor<Scalar> operator()(const Tensor<Scalar>& tokens, const RowMat<double>& origins = {}) const;

  const Mlp2<Scalar>& mlp() const { return mlp_; }

 private:
  Mlp2<Scalar> mlp_;
  Tensor<Scalar> cumulative_;  // [T_f, T_f] upper-triangular ones
  Index steps_ = 0;
};

template <typename Scalar>
struct ModelOutput {
  Tensor<Scalar> trajectories;  // [K, T_f, 2], focal frame
  Tensor<Scalar> logits;        // [K]
  Tensor<Scalar> probabilities; // [K]
  Tensor<Scalar> aux;           // [N_in, T_f, 2] or undefined
  Tensor<Scalar> motion_initial;  // F0 [K_e, C]
  Tensor<Scalar> decoded;         // F' after the mode projection [K, C]
  EncoderOutput<Scalar> encoder;
};

/// The full forecaster: embedding, unified encoder, decoder and heads.
/// Owns its parameters; not copyable because tensors share storage.
template <typename Scalar>
class HamfModel {
 public:
  HamfModel(const ModelConfig& config, std::uint64_t seed);
  HamfModel(const HamfModel&) = delete;
  HamfModel& operator=(const HamfModel&) = delete;

  ModelOutput<Scalar> forward(const SceneFeatures& features) const;

  /// Normalizes, runs the model, and maps the K modes back to the scenario's
  /// own frame.
  PredictionSet predict(const Scenario& scenario) const;

  const ModelConfig& config() const { return config_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  Index parameter_count() const { return params_.count(); }

  const SceneEmbedding<Scalar>& embedding() const { return embedding_; }
  const Encoder<Scalar>& encoder() const { return encoder_; }
  const MotionDecoder<Scalar>& decoder() const { return decoder_; }
  MotionDecoder<Scalar>& decoder() { return decoder_; }
  const TrajectoryHead<Scalar>& trajectory_head() const { return trajectory_head_; }
  const Mlp2<Scalar>& probability_head() const { return probability_head_; }

 private:
  Tensor<Scalar> project_modes(const Tensor<Scalar>& tokens) const;

  ModelConfig config_;
  ParameterSet<Scalar> params_;
  SceneEmbedding<Scalar> embedding_;
  Tensor<Scalar> motion_tokens_;  // [K_e, C], undefined for the no-motion-token variant
  Linear<Scalar> motion_from_focal_;
  Encoder<Scalar> encoder_;
  MotionDecoder<Scalar> decoder_;
  Tensor<Scalar> mode_projection_;  // [K_e, K] when K_e < K
  TrajectoryHead<Scalar> trajectory_head_;
  Mlp2<Scalar> probability_head_;
  TrajectoryHead<Scalar> aux_head_;
};

/// Parameter count of a configuration without keeping the model.
Index count_parameters(const ModelConfig& config);

extern template class HamfModel<float>;
extern template class HamfModel<double>;

}  // namespace hamf
