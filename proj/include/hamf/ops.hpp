#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hamf/tensor.hpp"

namespace hamf {

/// Added to masked attention logits before softmax.
inline constexpr double kMaskFill = -1e9;

/// Boolean mask stored one byte per element (1 = keep / valid).
using Mask = std::vector<std::uint8_t>;

// Elementwise binary ops. `b` may have the shape of `a` or a suffix of it, in
// which case it is repeated over the leading dimensions of `a`.
template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar> Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor);
template <typename Scalar> Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset);

/// [..., k] x [k, m] -> [..., m]; leading dimensions are flattened into rows.
template <typename Scalar> Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& w);

/// Batched product [b, n, k] x [b, k, m] -> [b, n, m], or with `transpose_b`
/// [b, n, k] x [b, m, k]^T.
template <typename Scalar>
Tensor<Scalar> bmm(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b = false);

template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, Index axis);
template <typename Scalar>
Tensor<Scalar> concat(std::initializer_list<Tensor<Scalar>> parts, Index axis) {
  std::vector<Tensor<Scalar>> v(parts);
  return concat<Scalar>(std::span<const Tensor<Scalar>>(v), axis);
}
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& a, Index axis, Index start, Index length);
template <typename Scalar>
std::vector<Tensor<Scalar>> split(const Tensor<Scalar>& a, Index axis, const std::vector<Index>& sizes);

/// Swaps two axes.
template <typename Scalar> Tensor<Scalar> transpose(const Tensor<Scalar>& a, Index axis0, Index axis1);
template <typename Scalar> Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape);

template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& a, Index axis);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& a, Index axis);
/// Max along an axis. The gradient goes to the first maximal element.
template <typename Scalar> Tensor<Scalar> max(const Tensor<Scalar>& a, Index axis);
template <typename Scalar> Tensor<Scalar> sum_all(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> mean_all(const Tensor<Scalar>& a);

template <typename Scalar> Tensor<Scalar> exp(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> log(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> softplus(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> silu(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> relu(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> square(const Tensor<Scalar>& a);
/// Smooth-L1 (Huber) applied elementwise with transition point `beta`.
template <typename Scalar> Tensor<Scalar> smooth_l1(const Tensor<Scalar>& a, Scalar beta);

/// Softmax over the last axis. Where `key_mask` (length = last dim) is 0 the
/// logit is replaced by kMaskFill before normalization.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& a, const Mask* key_mask = nullptr);
template <typename Scalar> Tensor<Scalar> log_softmax(const Tensor<Scalar>& a);

/// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gamma + beta.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& a, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps = Scalar(1e-5));

/// Gathers slices along `axis`.
template <typename Scalar>
Tensor<Scalar> index_select(const Tensor<Scalar>& a, Index axis, const std::vector<Index>& indices);

/// Replaces elements where `mask` is 0 with `fill`. `mask` has one entry per
/// element of `a`, or one per row of the last axis (length numel / last dim).
template <typename Scalar>
Tensor<Scalar> masked_fill(const Tensor<Scalar>& a, const Mask& mask, Scalar fill);

/// First-order linear recurrence along axis -2 of [..., T, F] inputs:
/// h_t = a_t * h_{t-1} + b_t, h_0 = 0.
template <typename Scalar>
Tensor<Scalar> linear_recurrence(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

}  // namespace hamf
