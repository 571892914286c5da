#pragma once

#include <vector>

#include "hamf/embedding.hpp"
#include "hamf/model.hpp"

namespace hamf {

inline constexpr double kSmoothL1Beta = 1.0;

/// Supervision for one scenario in the focal frame.
struct Targets {
  Eigen::MatrixX2d focal_future;  // [T_f, 2]
  Mask focal_valid;               // T_f
  RowMat<double> aux_future;      // [N_in * T_f, 2]
  Mask aux_valid;                 // N_in * T_f; always 0 on the focal agent's rows
};

/// Builds targets from a focal-frame scene.
Targets extract_targets(const Scenario& scene);

/// Mode with the smallest mean displacement over valid future steps; ties go
/// to the lowest index. trajectories: row-major [K, T, 2]. Throws when no
/// future step is valid.
Index select_winner(const double* trajectories, Index modes, Index steps, const Eigen::MatrixX2d& gt,
                    const Mask& valid);

template <typename Scalar>
struct LossReport {
  Tensor<Scalar> total;
  Tensor<Scalar> regression;
  Tensor<Scalar> classification;
  Tensor<Scalar> auxiliary;
  Index winner = 0;
};

/// Winner-take-all loss: smooth-L1 on the winning mode only, cross-entropy
/// of the winner index from `logits`, smooth-L1 on the surrounding agents'
/// single-mode predictions (`aux` may be undefined), summed without weights.
template <typename Scalar>
LossReport<Scalar> wta_loss(const Tensor<Scalar>& trajectories, const Tensor<Scalar>& logits,
                            const Tensor<Scalar>& aux, const Targets& targets);

extern template LossReport<float> wta_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                           const Targets&);
extern template LossReport<double> wta_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                            const Targets&);

}  // namespace hamf
