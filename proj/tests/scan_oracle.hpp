#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hamf/ssm.hpp"
#include "test_util.hpp"

namespace hamf::testing {

struct ScanCase {
  ScanDims dims;
  std::vector<double> u, delta, b, c, a;
};

inline ScanCase random_scan(Rng& rng, Index max_steps) {
  ScanCase s;
  s.dims.batch = 1 + static_cast<Index>(rng.below(3));
  s.dims.steps = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_steps)));
  s.dims.channels = 1 + static_cast<Index>(rng.below(6));
  s.dims.state = 1 + static_cast<Index>(rng.below(5));
  const Index btd = s.dims.batch * s.dims.steps * s.dims.channels;
  const Index btn = s.dims.batch * s.dims.steps * s.dims.state;
  for (Index i = 0; i < btd; ++i) {
    s.u.push_back(rng.normal());
    s.delta.push_back(std::log1p(std::exp(rng.normal(-1.0, 1.0))));
  }
  for (Index i = 0; i < btn; ++i) {
    s.b.push_back(rng.normal());
    s.c.push_back(rng.normal());
  }
  for (Index i = 0; i < s.dims.channels * s.dims.state; ++i) s.a.push_back(-std::exp(rng.normal(0.0, 0.7)));
  return s;
}

// Element-at-a-time reference of the recurrence.
inline std::vector<double> scan_oracle(const ScanCase& s) {
  const auto [B, T, D, N] = s.dims;
  std::vector<double> y(static_cast<std::size_t>(B * T * D), 0.0);
  for (Index bi = 0; bi < B; ++bi)
    for (Index d = 0; d < D; ++d)
      for (Index n = 0; n < N; ++n) {
        double h = 0.0;
        for (Index t = 0; t < T; ++t) {
          const auto td = static_cast<std::size_t>((bi * T + t) * D + d);
          const auto tn = static_cast<std::size_t>((bi * T + t) * N + n);
          h = std::exp(s.delta[td] * s.a[static_cast<std::size_t>(d * N + n)]) * h + s.delta[td] * s.b[tn] * s.u[td];
          y[td] += s.c[tn] * h;
        }
      }
  return y;
}

template <typename Scalar>
std::vector<Scalar> cast(const std::vector<double>& v) {
  return std::vector<Scalar>(v.begin(), v.end());
}

template <typename Scalar>
std::vector<Scalar> run(const ScanCase& s, bool chunked, Index chunk = 16) {
  const auto u = cast<Scalar>(s.u), dl = cast<Scalar>(s.delta), b = cast<Scalar>(s.b), c = cast<Scalar>(s.c),
             a = cast<Scalar>(s.a);
  std::vector<Scalar> y(u.size());
  if (chunked)
    selective_scan_chunked<Scalar>(s.dims, u, dl, b, c, a, y, chunk);
  else
    selective_scan_sequential<Scalar>(s.dims, u, dl, b, c, a, y);
  return y;
}

template <typename A, typename B>
double max_scaled_diff(const std::vector<A>& x, const std::vector<B>& y) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ref = static_cast<double>(y[i]);
    worst = std::max(worst, std::abs(static_cast<double>(x[i]) - ref) / std::max(1.0, std::abs(ref)));
  }
  return worst;
}

}  // namespace hamf::testing
