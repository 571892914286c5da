#pragma once

#include <string>
#include <vector>

#include "hamf/model_config.hpp"
#include "hamf/nn.hpp"

namespace hamf {

/// Scaled dot-product multi-head attention with learned Q/K/V/O projections.
template <typename Scalar>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet<Scalar>& params, const std::string& name, Index dim, Index heads, Rng& rng);

  /// query: [n, C], context: [m, C]. `key_mask` (length m, 1 = attendable)
  /// hides context rows. Throws when every key is masked. When `weights` is
  /// non-null it receives the attention map [heads, n, m].
  Tensor<Scalar> operator()(const Tensor<Scalar>& query, const Tensor<Scalar>& context, const Mask* key_mask,
                            Tensor<Scalar>* weights = nullptr) const;

  const Linear<Scalar>& query_proj() const { return q_; }
  const Linear<Scalar>& key_proj() const { return k_; }
  const Linear<Scalar>& value_proj() const { return v_; }
  const Linear<Scalar>& output_proj() const { return o_; }
  Index heads() const { return heads_; }

 private:
  Linear<Scalar> q_, k_, v_, o_;
  Index heads_ = 1;
};

/// Pre-norm transformer block: x + Attn(LN x), then x + FFN(LN x).
template <typename Scalar>
class SelfAttentionBlock {
 public:
  SelfAttentionBlock() = default;
  SelfAttentionBlock(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config, Rng& rng);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, const Mask* key_mask) const;

  const MultiHeadAttention<Scalar>& attention() const { return attn_; }
  const Mlp2<Scalar>& ffn() const { return ffn_; }

 private:
  LayerNorm<Scalar> norm_attn_, norm_ffn_;
  MultiHeadAttention<Scalar> attn_;
  Mlp2<Scalar> ffn_;
};

/// Motion tokens query scene tokens. No residual to the query: the output is
/// a + FFN(LN a) with a = Attn(LN q, LN kv), so it is exactly zero when the
/// attention and feed-forward output projections are zero.
template <typename Scalar>
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config, Rng& rng);

  Tensor<Scalar> operator()(const Tensor<Scalar>& query, const Tensor<Scalar>& context, const Mask* key_mask) const;

  const MultiHeadAttention<Scalar>& attention() const { return attn_; }
  const Mlp2<Scalar>& ffn() const { return ffn_; }

 private:
  LayerNorm<Scalar> norm_q_, norm_kv_, norm_ffn_;
  MultiHeadAttention<Scalar> attn_;
  Mlp2<Scalar> ffn_;
};

template <typename Scalar>
struct LayerTrace {
  Tensor<Scalar> f_sa;  // undefined when the variant has no such branch
  Tensor<Scalar> f_ca;
  Tensor<Scalar> motion;  // F after the layer
  Tensor<Scalar> scene;   // S after the layer
};

template <typename Scalar>
struct EncoderOutput {
  Tensor<Scalar> motion;  // F_L [K_e, C]; undefined for the no-motion-token variant
  Tensor<Scalar> scene;   // S_L [N_in + M, C]
  std::vector<LayerTrace<Scalar>> layers;
};

template <typename Scalar>
struct EncoderLayer {
  SelfAttentionBlock<Scalar> self_block;
  LayerNorm<Scalar> norm;  // applied to the whole self-attention output
  CrossAttentionBlock<Scalar> cross_block;
  bool has_self = false;
  bool has_cross = false;
};

/// The unified encoder with all fusion variants.
template <typename Scalar>
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config, Rng& rng);

  /// motion: [K_e, C] (ignored by the no-motion-token variant); scene: [S, C];
  /// scene_valid: length S.
  EncoderOutput<Scalar> operator()(const Tensor<Scalar>& motion, const Tensor<Scalar>& scene,
                                   const Mask& scene_valid) const;

  const std::vector<EncoderLayer<Scalar>>& layers() const { return layers_; }
  EncoderVariant variant() const { return variant_; }

 private:
  std::pair<Tensor<Scalar>, Tensor<Scalar>> self_step(const EncoderLayer<Scalar>& layer, const Tensor<Scalar>& f,
                                                      const Tensor<Scalar>& s, const Mask& joint_mask,
                                                      Tensor<Scalar>* s_pre_norm) const;

  std::vector<EncoderLayer<Scalar>> layers_;
  EncoderVariant variant_ = EncoderVariant::full;
  bool cross_kv_post_norm_ = true;
};

extern template class MultiHeadAttention<float>;
extern template class MultiHeadAttention<double>;
extern template class Encoder<float>;
extern template class Encoder<double>;

}  // namespace hamf
