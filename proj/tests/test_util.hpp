#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hamf/ops.hpp"
#include "hamf/random.hpp"

namespace hamf::testing {

inline Vec<double> random_values(Rng& rng, Index n, double lo = -1.0, double hi = 1.0) {
  Vec<double> v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

inline Tensor<double> random_param(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const Index n = shape_numel(shape);
  return Tensor<double>::parameter(std::move(shape), random_values(rng, n, lo, hi));
}

inline Shape random_shape(Rng& rng, Index min_rank, Index max_rank, Index max_dim = 5) {
  const Index rank = min_rank + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_rank - min_rank + 1)));
  Shape s;
  for (Index i = 0; i < rank; ++i) s.push_back(1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_dim))));
  return s;
}

inline double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Largest relative error between tape gradients and central differences
/// over every element of every input. `f` must be a pure function of the
/// input values.
template <typename F>
double gradient_error(const std::vector<Tensor<double>>& inputs, F&& f, double h = 1e-5, double floor = 1e-3) {
  for (auto t : inputs) t.zero_grad();
  std::vector<Vec<double>> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(f(inputs));
  }
  for (const auto& t : inputs) analytic.push_back(t.has_grad() ? t.grad() : Vec<double>::Zero(t.numel()));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double> t = inputs[k];
    for (Index i = 0; i < t.numel(); ++i) {
      const double x = t.value()[i];
      t.mutable_value()[i] = x + h;
      const double up = f(inputs).item();
      t.mutable_value()[i] = x - h;
      const double down = f(inputs).item();
      t.mutable_value()[i] = x;
      worst = std::max(worst, rel_error(analytic[k][i], (up - down) / (2.0 * h), floor));
    }
  }
  return worst;
}

/// Weighted sum that gives every output element a distinct gradient.
inline Tensor<double> probe(const Tensor<double>& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum_all(mul(out, Tensor<double>::constant(out.shape(), random_values(rng, out.numel()))));
}

}  // namespace hamf::testing
