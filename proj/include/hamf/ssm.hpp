#pragma once

#include <span>
#include <string>

#include "hamf/nn.hpp"

namespace hamf {

struct SsmConfig {
  Index d_model = 128;
  Index expand = 2;
  Index d_state = 16;
  Index conv_width = 4;
  Index dt_rank = 0;  // 0 = ceil(d_model / 16)

  Index d_inner() const { return expand * d_model; }
  Index resolved_dt_rank() const { return dt_rank > 0 ? dt_rank : (d_model + 15) / 16; }
};

enum class ScanAlgorithm { sequential, chunked };

/// Dimensions of a batched selective scan. Arrays are row-major:
/// u, delta, y: [batch, steps, channels]; b, c: [batch, steps, state];
/// a: [channels, state].
struct ScanDims {
  Index batch = 1;
  Index steps = 1;
  Index channels = 1;
  Index state = 1;
};

/// Step-by-step recurrence: h_t = exp(delta_t * A) h_{t-1} + delta_t * B_t * u_t,
/// y_t = C_t . h_t, h_0 = 0. When `states` is non-empty it receives every h_t
/// as [batch, steps, channels, state].
template <typename Scalar>
void selective_scan_sequential(const ScanDims& dims, std::span<const Scalar> u, std::span<const Scalar> delta,
                               std::span<const Scalar> b, std::span<const Scalar> c, std::span<const Scalar> a,
                               std::span<Scalar> y, std::span<Scalar> states = {});

/// Same recurrence evaluated chunk by chunk: each chunk runs from a zero
/// state while tracking the running product of its decay factors, then chunk
/// carries are combined with the associative rule
/// (P2, h2) o (P1, h1) = (P2 * P1, P2 * h1 + h2).
template <typename Scalar>
void selective_scan_chunked(const ScanDims& dims, std::span<const Scalar> u, std::span<const Scalar> delta,
                            std::span<const Scalar> b, std::span<const Scalar> c, std::span<const Scalar> a,
                            std::span<Scalar> y, Index chunk = 16, std::span<Scalar> states = {});

/// Differentiable selective scan. u, delta: [B, T, D]; b, c: [B, T, N];
/// a: [D, N] with negative entries. Returns y: [B, T, D].
template <typename Scalar>
Tensor<Scalar> selective_scan(const Tensor<Scalar>& u, const Tensor<Scalar>& delta, const Tensor<Scalar>& b,
                              const Tensor<Scalar>& c, const Tensor<Scalar>& a,
                              ScanAlgorithm algorithm = ScanAlgorithm::chunked);

/// Depthwise causal convolution over axis 1 of x: [B, T, D] with
/// weight: [D, W] (tap W-1 multiplies the current step) and bias: [D].
template <typename Scalar>
Tensor<Scalar> causal_conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias);

/// The scan-side parameters of one direction of a Mamba block.
template <typename Scalar>
struct ScanBranch {
  Tensor<Scalar> conv_weight;  // [D, W]
  Tensor<Scalar> conv_bias;    // [D]
  Linear<Scalar> x_proj;       // D -> dt_rank + 2N
  Linear<Scalar> dt_proj;      // dt_rank -> D
  Tensor<Scalar> a_log;        // [D, N]
  Tensor<Scalar> d_skip;       // [D]
  Linear<Scalar> out_proj;     // D -> C

  ScanBranch() = default;
  ScanBranch(ParameterSet<Scalar>& params, const std::string& name, const SsmConfig& config, Rng& rng);

  /// Causal conv + SiLU + selective scan + skip on the stream [B, T, D].
  /// Rows whose `step_valid` entry is 0 get a zero step size, so the state
  /// passes through them unchanged and they inject nothing.
  Tensor<Scalar> scan(const Tensor<Scalar>& stream, const Mask* step_valid, ScanAlgorithm algorithm) const;

  Index d_state = 0;
  Index dt_rank = 0;
};

/// Pre-norm unidirectional Mamba block with residual: x + out(scan(conv(in(LN x))) * silu(gate)).
template <typename Scalar>
class MambaBlock {
 public:
  MambaBlock() = default;
  MambaBlock(ParameterSet<Scalar>& params, const std::string& name, const SsmConfig& config, Rng& rng);

  /// x: [B, T, C]. `step_valid` (length B*T) marks real steps; padded steps
  /// must be zero on input and are zero on output.
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, const Mask* step_valid = nullptr,
                            ScanAlgorithm algorithm = ScanAlgorithm::chunked) const;

  const ScanBranch<Scalar>& branch() const { return branch_; }

 private:
  SsmConfig config_;
  LayerNorm<Scalar> norm_;
  Linear<Scalar> in_proj_;  // C -> 2D (stream, gate)
  ScanBranch<Scalar> branch_;
};

/// Bidirectional variant: a forward branch and a reversed-sequence branch,
/// each with its own conv/scan parameters and output projection, sharing the
/// input projection and gate. The branch outputs are summed.
template <typename Scalar>
class BiMambaBlock {
 public:
  BiMambaBlock() = default;
  BiMambaBlock(ParameterSet<Scalar>& params, const std::string& name, const SsmConfig& config, Rng& rng);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, ScanAlgorithm algorithm = ScanAlgorithm::chunked) const;

  const ScanBranch<Scalar>& forward_branch() const { return forward_; }
  const ScanBranch<Scalar>& backward_branch() const { return backward_; }
  ScanBranch<Scalar>& forward_branch() { return forward_; }
  ScanBranch<Scalar>& backward_branch() { return backward_; }

 private:
  SsmConfig config_;
  LayerNorm<Scalar> norm_;
  Linear<Scalar> in_proj_;
  ScanBranch<Scalar> forward_;
  ScanBranch<Scalar> backward_;
};

extern template class MambaBlock<float>;
extern template class MambaBlock<double>;
extern template class BiMambaBlock<float>;
extern template class BiMambaBlock<double>;

}  // namespace hamf
