#pragma once

#include <cstdint>
#include <vector>

#include "hamf/nn.hpp"

namespace hamf {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moment estimates for AdamW, one pair per parameter in ParameterSet order.
template <typename Scalar>
struct OptimizerState {
  std::vector<Vec<Scalar>> first_moment;
  std::vector<Vec<Scalar>> second_moment;
  std::int64_t step = 0;
  double lr = 0.0;
  double weight_decay = 0.01;
};

enum class StepOutcome { applied, skipped_non_finite };

/// Decoupled-weight-decay Adam. Decay is applied as w <- w - lr * wd * w in
/// the same step, before the moment update.
template <typename Scalar>
class AdamW {
 public:
  explicit AdamW(ParameterSet<Scalar>& params, AdamWOptions options = {});

  /// Applies one update from the gradients currently held by the parameters.
  /// A non-finite gradient anywhere skips the whole step.
  StepOutcome step(double lr);

  const OptimizerState<Scalar>& state() const { return state_; }
  OptimizerState<Scalar>& state() { return state_; }
  const AdamWOptions& options() const { return options_; }

 private:
  ParameterSet<Scalar>* params_;
  AdamWOptions options_;
  OptimizerState<Scalar> state_;
};

/// Cosine decay from lr0 at step 0 to lr_min at total_steps. Steps past the
/// end clamp to lr_min.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0 = 1e-3, double lr_min = 0.0);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace hamf
