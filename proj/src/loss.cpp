#include "hamf/loss.hpp"

#include <limits>

namespace hamf {

Targets extract_targets(const Scenario& scene) {
  const Index H = scene.history_steps;
  const Index T = scene.future_steps;
  const auto N = static_cast<Index>(scene.agents.size());
  Targets t;
  t.focal_future = Eigen::MatrixX2d::Zero(T, 2);
  t.focal_valid.assign(static_cast<std::size_t>(T), 0);
  t.aux_future = RowMat<double>::Zero(N * T, 2);
  t.aux_valid.assign(static_cast<std::size_t>(N * T), 0);
  for (Index n = 0; n < N; ++n) {
    const AgentTrack& a = scene.agents[static_cast<std::size_t>(n)];
    const bool focal = n == scene.focal_index;
    // An agent without any observed step has no token to predict from.
    const bool observed = last_observed_step(a, H) >= 0;
    for (Index k = 0; k < T; ++k) {
      const auto src = static_cast<std::size_t>(H + k);
      if (!a.valid[src]) continue;
      if (focal) {
        t.focal_future.row(k) = a.positions[src].transpose();
        t.focal_valid[static_cast<std::size_t>(k)] = 1;
      } else if (observed) {
        t.aux_future.row(n * T + k) = a.positions[src].transpose();
        t.aux_valid[static_cast<std::size_t>(n * T + k)] = 1;
      }
    }
  }
  return t;
}

Index select_winner(const double* trajectories, Index modes, Index steps, const Eigen::MatrixX2d& gt,
                    const Mask& valid) {
  Index n_valid = 0;
  for (auto v : valid) n_valid += v ? 1 : 0;
  if (n_valid == 0) throw std::invalid_argument("select_winner: no valid future step");
  Index best = 0;
  double best_ade = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < modes; ++k) {
    double total = 0.0;
    for (Index t = 0; t < steps; ++t) {
      if (!valid[static_cast<std::size_t>(t)]) continue;
      const double dx = trajectories[(k * steps + t) * 2] - gt(t, 0);
      const double dy = trajectories[(k * steps + t) * 2 + 1] - gt(t, 1);
      total += std::sqrt(dx * dx + dy * dy);
    }
    const double ade = total / static_cast<double>(n_valid);
    if (ade < best_ade) {
      best_ade = ade;
      best = k;
    }
  }
  return best;
}

namespace {

template <typename Scalar>
Tensor<Scalar> masked_smooth_l1_mean(const Tensor<Scalar>& pred, const RowMat<double>& target, const Mask& row_valid,
                                     Index n_valid) {
  Vec<Scalar> tv(target.size());
  for (Index i = 0; i < target.size(); ++i) tv[i] = static_cast<Scalar>(target.data()[i]);
  const Tensor<Scalar> diff = sub(pred, Tensor<Scalar>::constant(pred.shape(), std::move(tv)));
  const Tensor<Scalar> per = masked_fill(smooth_l1(diff, static_cast<Scalar>(kSmoothL1Beta)), row_valid, Scalar(0));
  return scale(sum_all(per), static_cast<Scalar>(1.0 / (2.0 * static_cast<double>(n_valid))));
}

}  // namespace

template <typename Scalar>
LossReport<Scalar> wta_loss(const Tensor<Scalar>& trajectories, const Tensor<Scalar>& logits,
                            const Tensor<Scalar>& aux, const Targets& targets) {
  const Index K = trajectories.dim(0);
  const Index T = trajectories.dim(1);
  if (trajectories.rank() != 3 || trajectories.dim(2) != 2 || T != targets.focal_future.rows())
    throw ShapeError("wta_loss", trajectories.shape(), {targets.focal_future.rows(), 2});
  if (logits.rank() != 1 || logits.dim(0) != K) throw ShapeError("wta_loss", trajectories.shape(), logits.shape());

  LossReport<Scalar> r;
  std::vector<double> values(static_cast<std::size_t>(trajectories.numel()));
  for (Index i = 0; i < trajectories.numel(); ++i) values[static_cast<std::size_t>(i)] = trajectories.value()[i];
  r.winner = select_winner(values.data(), K, T, targets.focal_future, targets.focal_valid);

  Index n_valid = 0;
  for (auto v : targets.focal_valid) n_valid += v ? 1 : 0;
  const RowMat<double> gt = targets.focal_future;
  const Tensor<Scalar> winner = reshape(slice(trajectories, 0, r.winner, 1), {T, 2});
  r.regression = masked_smooth_l1_mean(winner, gt, targets.focal_valid, n_valid);
  r.classification = scale(index_select(log_softmax(logits), 0, {r.winner}), Scalar(-1));
  r.classification = reshape(r.classification, {});

  Index aux_valid = 0;
  for (auto v : targets.aux_valid) aux_valid += v ? 1 : 0;
  if (aux.defined() && aux_valid > 0) {
    if (aux.numel() != targets.aux_future.size()) throw ShapeError("wta_loss", aux.shape(), {targets.aux_future.rows(), 2});
    r.auxiliary = masked_smooth_l1_mean(aux, targets.aux_future, targets.aux_valid, aux_valid);
  } else {
    r.auxiliary = Tensor<Scalar>::zeros({});
  }
  r.total = add(add(r.regression, r.classification), r.auxiliary);
  return r;
}

template LossReport<float> wta_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, const Targets&);
template LossReport<double> wta_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                     const Targets&);

}  // namespace hamf
