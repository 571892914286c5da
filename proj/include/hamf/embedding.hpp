#pragma once

#include <string>
#include <vector>

#include "hamf/model_config.hpp"
#include "hamf/ssm.hpp"

namespace hamf {

inline constexpr Index kAgentChannels = 5;  // dx, dy, cos, sin, valid
inline constexpr Index kMapChannels = 8;    // x, y, dx, dy, lane one-hot(3), valid
inline constexpr Index kPoseChannels = 4;   // x, y, cos, sin

/// Model-ready arrays extracted from a focal-frame scene. Rows of the scene
/// token matrix are agents first, then map polylines.
struct SceneFeatures {
  Index agents = 0;
  Index polylines = 0;
  Index history_steps = 0;
  Index focal = 0;
  RowMat<double> agent_steps;  // [N * T_h, 5]
  Mask agent_step_valid;       // N * T_h
  std::vector<Index> agent_last;  // last valid observed step, -1 when absent
  std::vector<Index> agent_category;
  RowMat<double> map_points;  // [M * L, 8]
  Mask map_point_valid;       // M * L
  std::vector<Index> lane_type;
  RowMat<double> poses;  // [N + M, 4]
  Mask token_valid;      // N + M

  Index tokens() const { return agents + polylines; }
};

/// `scene` must already be expressed in the focal frame.
SceneFeatures extract_features(const Scenario& scene);

/// Fourier features of poses [n, 4]: for each channel, sin then cos of
/// `frequencies` log-spaced angular frequencies. Positions are scaled to
/// hectometres first. Returns [n, 4 * 2 * frequencies].
RowMat<double> fourier_features(const RowMat<double>& poses, Index frequencies);

/// Shared point MLP -> masked max-pool -> SiLU -> linear, one token per polyline.
template <typename Scalar>
class PolylineEncoder {
 public:
  PolylineEncoder() = default;
  PolylineEncoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config, Rng& rng);

  /// points: [M, L, C_m]; point_valid: M * L. Throws when a polyline has no
  /// valid point.
  Tensor<Scalar> operator()(const Tensor<Scalar>& points, const Mask& point_valid) const;

 private:
  Mlp2<Scalar> point_mlp_;
  Linear<Scalar> post_;
};

/// Linear step projection followed by stacked unidirectional Mamba blocks;
/// the token is the output at the last valid observed step.
template <typename Scalar>
class AgentEncoder {
 public:
  AgentEncoder() = default;
  AgentEncoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config, Rng& rng);

  /// steps: [N, T, C_a]. Returns the per-step outputs [N, T, C] when
  /// `sequence` is non-null, and the agent tokens [N, C].
  Tensor<Scalar> operator()(const Tensor<Scalar>& steps, const Mask& step_valid, const std::vector<Index>& last,
                            Tensor<Scalar>* sequence = nullptr) const;

  const std::vector<MambaBlock<Scalar>>& blocks() const { return blocks_; }

 private:
  Linear<Scalar> input_;
  std::vector<MambaBlock<Scalar>> blocks_;
  Tensor<Scalar> absent_;  // [C]
  ScanAlgorithm scan_ = ScanAlgorithm::chunked;
};

template <typename Scalar>
struct SceneTokens {
  Tensor<Scalar> tokens;  // [N + M, C]
  Mask valid;
};

/// Scene tokens S0 = concat(agent tokens, map tokens) + type embedding + PE.
template <typename Scalar>
class SceneEmbedding {
 public:
  SceneEmbedding() = default;
  SceneEmbedding(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config, Rng& rng);

  SceneTokens<Scalar> operator()(const SceneFeatures& f) const;

  /// Projected Fourier encoding of arbitrary poses [n, 4].
  Tensor<Scalar> positional(const RowMat<double>& poses) const;

  const PolylineEncoder<Scalar>& polylines() const { return polylines_; }
  const AgentEncoder<Scalar>& agents() const { return agents_; }

 private:
  PolylineEncoder<Scalar> polylines_;
  AgentEncoder<Scalar> agents_;
  Tensor<Scalar> category_;   // [4, C]
  Tensor<Scalar> lane_type_;  // [3, C]
  Linear<Scalar> pe_;
  Index frequencies_ = 64;
};

template <typename Scalar>
Tensor<Scalar> to_tensor(const RowMat<double>& m, Shape shape) {
  Vec<Scalar> v(m.size());
  for (Index i = 0; i < m.size(); ++i) v[i] = static_cast<Scalar>(m.data()[i]);
  return Tensor<Scalar>::constant(std::move(shape), std::move(v));
}

extern template class PolylineEncoder<float>;
extern template class PolylineEncoder<double>;
extern template class AgentEncoder<float>;
extern template class AgentEncoder<double>;
extern template class SceneEmbedding<float>;
extern template class SceneEmbedding<double>;

}  // namespace hamf
