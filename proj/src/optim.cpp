#include "hamf/optim.hpp"

#include <cmath>
#include <numbers>

namespace hamf {

template <typename Scalar>
AdamW<Scalar>::AdamW(ParameterSet<Scalar>& params, AdamWOptions options) : params_(&params), options_(options) {
  state_.weight_decay = options.weight_decay;
  for (const auto& e : params.entries()) {
    state_.first_moment.push_back(Vec<Scalar>::Zero(e.tensor.numel()));
    state_.second_moment.push_back(Vec<Scalar>::Zero(e.tensor.numel()));
  }
}

template <typename Scalar>
StepOutcome AdamW<Scalar>::step(double lr) {
  auto& entries = params_->entries();
  if (entries.size() != state_.first_moment.size())
    throw std::logic_error("adamw: parameter set changed after optimizer construction");
  for (auto& e : entries)
    if (e.tensor.has_grad() && !e.tensor.node()->grad.allFinite()) return StepOutcome::skipped_non_finite;

  ++state_.step;
  state_.lr = lr;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  const auto decay = static_cast<Scalar>(1.0 - lr * options_.weight_decay);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor<Scalar>& w = entries[i].tensor;
    Vec<Scalar>& value = w.mutable_value();
    Vec<Scalar>& m = state_.first_moment[i];
    Vec<Scalar>& v = state_.second_moment[i];
    if (m.size() != value.size()) throw ShapeError("adamw", Shape{m.size()}, Shape{value.size()});
    const Vec<Scalar> g = w.grad();
    value *= decay;
    m = static_cast<Scalar>(b1) * m + static_cast<Scalar>(1.0 - b1) * g;
    v = static_cast<Scalar>(b2) * v + static_cast<Scalar>(1.0 - b2) * g.square();
    const Vec<Scalar> mhat = m / static_cast<Scalar>(c1);
    const Vec<Scalar> vhat = v / static_cast<Scalar>(c2);
    value -= static_cast<Scalar>(lr) * mhat / (vhat.sqrt() + static_cast<Scalar>(options_.eps));
  }
  return StepOutcome::applied;
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min) {
  if (total_steps <= 0 || step >= total_steps) return lr_min;
  if (step <= 0) return lr0;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + (lr0 - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace hamf
