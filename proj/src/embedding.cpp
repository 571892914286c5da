#include "hamf/embedding.hpp"

#include <cmath>
#include <numbers>

namespace hamf {

SceneFeatures extract_features(const Scenario& scene) {
  SceneFeatures f;
  f.agents = static_cast<Index>(scene.agents.size());
  f.polylines = static_cast<Index>(scene.map.size());
  f.history_steps = scene.history_steps;
  f.focal = scene.focal_index;
  const Index T = scene.history_steps;
  f.agent_steps = RowMat<double>::Zero(f.agents * T, kAgentChannels);
  f.agent_step_valid.assign(static_cast<std::size_t>(f.agents * T), 0);
  f.poses = RowMat<double>::Zero(f.tokens(), kPoseChannels);
  f.token_valid.assign(static_cast<std::size_t>(f.tokens()), 0);

  for (Index n = 0; n < f.agents; ++n) {
    const AgentTrack& a = scene.agents[static_cast<std::size_t>(n)];
    for (Index t = 0; t < T; ++t) {
      const auto ut = static_cast<std::size_t>(t);
      if (!a.valid[ut]) continue;
      auto row = f.agent_steps.row(n * T + t);
      if (t > 0 && a.valid[ut - 1]) row.head<2>() = (a.positions[ut] - a.positions[ut - 1]).transpose();
      row(2) = std::cos(a.headings[ut]);
      row(3) = std::sin(a.headings[ut]);
      row(4) = 1.0;
      f.agent_step_valid[static_cast<std::size_t>(n * T + t)] = 1;
    }
    const Index last = last_observed_step(a, T);
    f.agent_last.push_back(last);
    f.agent_category.push_back(static_cast<Index>(a.category));
    if (last >= 0) {
      const auto ul = static_cast<std::size_t>(last);
      f.poses.row(n) << a.positions[ul].x(), a.positions[ul].y(), std::cos(a.headings[ul]), std::sin(a.headings[ul]);
      f.token_valid[static_cast<std::size_t>(n)] = 1;
    } else {
      f.poses.row(n) << 0.0, 0.0, 1.0, 0.0;
    }
  }

  const Index L = f.polylines > 0 ? static_cast<Index>(scene.map.front().points.size()) : kPolylinePoints;
  f.map_points = RowMat<double>::Zero(f.polylines * L, kMapChannels);
  f.map_point_valid.assign(static_cast<std::size_t>(f.polylines * L), 0);
  for (Index m = 0; m < f.polylines; ++m) {
    const MapPolyline& pl = scene.map[static_cast<std::size_t>(m)];
    if (static_cast<Index>(pl.points.size()) != L)
      throw ShapeError("extract_features", "polylines must share one point count");
    std::vector<Index> valid;
    for (Index k = 0; k < L; ++k)
      if (pl.valid[static_cast<std::size_t>(k)]) valid.push_back(k);
    Point2 centroid = Point2::Zero();
    for (std::size_t i = 0; i < valid.size(); ++i) {
      const Index k = valid[i];
      const Point2& p = pl.points[static_cast<std::size_t>(k)];
      auto row = f.map_points.row(m * L + k);
      row(0) = p.x();
      row(1) = p.y();
      if (i + 1 < valid.size()) row.segment<2>(2) = (pl.points[static_cast<std::size_t>(valid[i + 1])] - p).transpose();
      row(4 + static_cast<Index>(pl.lane_type)) = 1.0;
      row(7) = 1.0;
      f.map_point_valid[static_cast<std::size_t>(m * L + k)] = 1;
      centroid += p;
    }
    const Index token = f.agents + m;
    if (valid.empty()) {
      f.poses.row(token) << 0.0, 0.0, 1.0, 0.0;
    } else {
      centroid /= static_cast<double>(valid.size());
      Point2 dir = pl.points[static_cast<std::size_t>(valid.back())] - pl.points[static_cast<std::size_t>(valid.front())];
      dir = dir.norm() > 0.0 ? Point2(dir.normalized()) : Point2(1.0, 0.0);
      f.poses.row(token) << centroid.x(), centroid.y(), dir.x(), dir.y();
      f.token_valid[static_cast<std::size_t>(token)] = 1;
    }
    f.lane_type.push_back(static_cast<Index>(pl.lane_type));
  }
  return f;
}

RowMat<double> fourier_features(const RowMat<double>& poses, Index frequencies) {
  const Index n = poses.rows();
  RowMat<double> out(n, kPoseChannels * 2 * frequencies);
  Eigen::ArrayXd omega(frequencies);
  for (Index k = 0; k < frequencies; ++k) {
    const double u = frequencies > 1 ? static_cast<double>(k) / static_cast<double>(frequencies - 1) : 0.0;
    omega[k] = std::numbers::pi * std::exp2(7.0 * u);
  }
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < kPoseChannels; ++c) {
      const double v = c < 2 ? poses(i, c) / 100.0 : poses(i, c);
      const Eigen::ArrayXd phase = omega * v;
      out.row(i).segment(c * 2 * frequencies, frequencies) = phase.sin().transpose();
      out.row(i).segment(c * 2 * frequencies + frequencies, frequencies) = phase.cos().transpose();
    }
  return out;
}

template <typename Scalar>
PolylineEncoder<Scalar>::PolylineEncoder(ParameterSet<Scalar>& params, const std::string& name,
                                         const ModelConfig& config, Rng& rng)
    : point_mlp_(params, name + ".point", kMapChannels, config.map_hidden, config.d_model, rng),
      post_(params, name + ".post", config.d_model, config.d_model, rng) {}

template <typename Scalar>
Tensor<Scalar> PolylineEncoder<Scalar>::operator()(const Tensor<Scalar>& points, const Mask& point_valid) const {
  const Index M = points.dim(0);
  const Index L = points.dim(1);
  for (Index m = 0; m < M; ++m) {
    bool any = false;
    for (Index k = 0; k < L; ++k) any = any || point_valid[static_cast<std::size_t>(m * L + k)];
    if (!any) throw std::invalid_argument("polyline " + std::to_string(m) + " has no valid point");
  }
  // Masked inputs are zeroed first so that arbitrary padded values cannot
  // overflow inside the point MLP.
  const Tensor<Scalar> h = point_mlp_(masked_fill(points, point_valid, Scalar(0)));
  const Tensor<Scalar> pooled = max(masked_fill(h, point_valid, static_cast<Scalar>(kMaskFill)), 1);
  return post_(silu(pooled));
}

template <typename Scalar>
AgentEncoder<Scalar>::AgentEncoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config,
                                   Rng& rng)
    : input_(params, name + ".input", kAgentChannels, config.d_model, rng), scan_(config.scan) {
  for (Index b = 0; b < config.agent_blocks; ++b)
    blocks_.emplace_back(params, name + ".mamba." + std::to_string(b), config.ssm(), rng);
  absent_ = params.add_normal(name + ".absent", {config.d_model}, rng);
}

template <typename Scalar>
Tensor<Scalar> AgentEncoder<Scalar>::operator()(const Tensor<Scalar>& steps, const Mask& step_valid,
                                                const std::vector<Index>& last, Tensor<Scalar>* sequence) const {
  const Index N = steps.dim(0);
  const Index T = steps.dim(1);
  const Index C = input_.out_features();
  Tensor<Scalar> x = masked_fill(input_(steps), step_valid, Scalar(0));
  for (const auto& block : blocks_) x = block(x, &step_valid, scan_);
  if (sequence) *sequence = x;
  std::vector<Index> rows(static_cast<std::size_t>(N));
  Vec<Scalar> absent = Vec<Scalar>::Zero(N * C);
  bool any_absent = false;
  for (Index n = 0; n < N; ++n) {
    const Index l = last[static_cast<std::size_t>(n)];
    rows[static_cast<std::size_t>(n)] = n * T + std::max<Index>(l, 0);
    if (l < 0) {
      absent.segment(n * C, C).setOnes();
      any_absent = true;
    }
  }
  Tensor<Scalar> tokens = index_select(reshape(x, {N * T, C}), 0, rows);
  if (any_absent) tokens = add(tokens, mul(Tensor<Scalar>::constant({N, C}, std::move(absent)), absent_));
  return tokens;
}

template <typename Scalar>
SceneEmbedding<Scalar>::SceneEmbedding(ParameterSet<Scalar>& params, const std::string& name,
                                       const ModelConfig& config, Rng& rng)
    : polylines_(params, name + ".map", config, rng),
      agents_(params, name + ".agent", config, rng),
      category_(params.add_normal(name + ".category", {kAgentCategoryCount, config.d_model}, rng)),
      lane_type_(params.add_normal(name + ".lane_type", {kLaneTypeCount, config.d_model}, rng)),
      pe_(params, name + ".pe", kPoseChannels * 2 * config.pe_frequencies, config.d_model, rng),
      frequencies_(config.pe_frequencies) {}

template <typename Scalar>
Tensor<Scalar> SceneEmbedding<Scalar>::positional(const RowMat<double>& poses) const {
  const RowMat<double> ff = fourier_features(poses, frequencies_);
  return pe_(to_tensor<Scalar>(ff, {ff.rows(), ff.cols()}));
}

template <typename Scalar>
SceneTokens<Scalar> SceneEmbedding<Scalar>::operator()(const SceneFeatures& f) const {
  std::vector<Tensor<Scalar>> parts;
  std::vector<Tensor<Scalar>> kinds;
  if (f.agents > 0) {
    const Tensor<Scalar> steps = to_tensor<Scalar>(f.agent_steps, {f.agents, f.history_steps, kAgentChannels});
    parts.push_back(agents_(steps, f.agent_step_valid, f.agent_last));
    kinds.push_back(index_select(category_, 0, f.agent_category));
  }
  if (f.polylines > 0) {
    const Index L = f.map_points.rows() / f.polylines;
    const Tensor<Scalar> pts = to_tensor<Scalar>(f.map_points, {f.polylines, L, kMapChannels});
    parts.push_back(polylines_(pts, f.map_point_valid));
    kinds.push_back(index_select(lane_type_, 0, f.lane_type));
  }
  if (parts.empty()) throw std::invalid_argument("scene embedding: scene has no agents and no polylines");
  const Tensor<Scalar> content = concat<Scalar>(std::span<const Tensor<Scalar>>(parts), 0);
  const Tensor<Scalar> kind = concat<Scalar>(std::span<const Tensor<Scalar>>(kinds), 0);
  return {add(add(content, kind), positional(f.poses)), f.token_valid};
}

template class PolylineEncoder<float>;
template class PolylineEncoder<double>;
template class AgentEncoder<float>;
template class AgentEncoder<double>;
template class SceneEmbedding<float>;
template class SceneEmbedding<double>;

}  // namespace hamf
