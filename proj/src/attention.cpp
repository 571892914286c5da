#include "hamf/attention.hpp"

#include <cmath>

namespace hamf {

template <typename Scalar>
MultiHeadAttention<Scalar>::MultiHeadAttention(ParameterSet<Scalar>& params, const std::string& name, Index dim,
                                               Index heads, Rng& rng)
    : q_(params, name + ".q", dim, dim, rng),
      k_(params, name + ".k", dim, dim, rng),
      v_(params, name + ".v", dim, dim, rng),
      o_(params, name + ".o", dim, dim, rng),
      heads_(heads) {
  if (heads < 1 || dim % heads != 0)
    throw std::invalid_argument(name + ": model dim " + std::to_string(dim) + " not divisible by " +
                                std::to_string(heads) + " heads");
}

template <typename Scalar>
Tensor<Scalar> MultiHeadAttention<Scalar>::operator()(const Tensor<Scalar>& query, const Tensor<Scalar>& context,
                                                      const Mask* key_mask, Tensor<Scalar>* weights) const {
  const Index n = query.dim(0);
  const Index m = context.dim(0);
  const Index dim = q_.out_features();
  const Index hd = dim / heads_;
  if (key_mask) {
    if (static_cast<Index>(key_mask->size()) != m)
      throw ShapeError("attention", "key mask of length " + std::to_string(key_mask->size()) + " for " +
                                        std::to_string(m) + " keys");
    bool any = false;
    for (auto k : *key_mask) any = any || k != 0;
    if (!any) throw std::invalid_argument("attention: every key is masked");
  }
  auto heads_first = [&](const Tensor<Scalar>& x, Index rows) {
    return transpose(reshape(x, {rows, heads_, hd}), 0, 1);
  };
  const Tensor<Scalar> q = heads_first(q_(query), n);
  const Tensor<Scalar> k = heads_first(k_(context), m);
  const Tensor<Scalar> v = heads_first(v_(context), m);
  const Tensor<Scalar> scores = scale(bmm(q, k, true), static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd))));
  const Tensor<Scalar> attn = softmax(scores, key_mask);
  if (weights) *weights = attn;
  return o_(reshape(transpose(bmm(attn, v), 0, 1), {n, dim}));
}

template <typename Scalar>
SelfAttentionBlock<Scalar>::SelfAttentionBlock(ParameterSet<Scalar>& params, const std::string& name,
                                               const ModelConfig& config, Rng& rng)
    : norm_attn_(params, name + ".norm_attn", config.d_model),
      norm_ffn_(params, name + ".norm_ffn", config.d_model),
      attn_(params, name + ".attn", config.d_model, config.n_heads, rng),
      ffn_(params, name + ".ffn", config.d_model, config.ffn_mult * config.d_model, config.d_model, rng) {}

template <typename Scalar>
Tensor<Scalar> SelfAttentionBlock<Scalar>::operator()(const Tensor<Scalar>& x, const Mask* key_mask) const {
  const Tensor<Scalar> xn = norm_attn_(x);
  const Tensor<Scalar> h = add(x, attn_(xn, xn, key_mask));
  return add(h, ffn_(norm_ffn_(h)));
}

template <typename Scalar>
CrossAttentionBlock<Scalar>::CrossAttentionBlock(ParameterSet<Scalar>& params, const std::string& name,
                                                 const ModelConfig& config, Rng& rng)
    : norm_q_(params, name + ".norm_q", config.d_model),
      norm_kv_(params, name + ".norm_kv", config.d_model),
      norm_ffn_(params, name + ".norm_ffn", config.d_model),
      attn_(params, name + ".attn", config.d_model, config.n_heads, rng),
      ffn_(params, name + ".ffn", config.d_model, config.ffn_mult * config.d_model, config.d_model, rng) {}

template <typename Scalar>
Tensor<Scalar> CrossAttentionBlock<Scalar>::operator()(const Tensor<Scalar>& query, const Tensor<Scalar>& context,
                                                       const Mask* key_mask) const {
  const Tensor<Scalar> a = attn_(norm_q_(query), norm_kv_(context), key_mask);
  return add(a, ffn_(norm_ffn_(a)));
}

template <typename Scalar>
Encoder<Scalar>::Encoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config, Rng& rng)
    : variant_(config.variant), cross_kv_post_norm_(config.cross_kv_post_norm) {
  const bool cross = config.variant != EncoderVariant::self_only && config.variant != EncoderVariant::no_motion_tokens;
  for (Index l = 0; l < config.encoder_layers; ++l) {
    const std::string p = name + "." + std::to_string(l);
    EncoderLayer<Scalar> layer;
    layer.has_self = true;
    layer.self_block = SelfAttentionBlock<Scalar>(params, p + ".self", config, rng);
    layer.norm = LayerNorm<Scalar>(params, p + ".norm", config.d_model);
    layer.has_cross = cross;
    if (cross) layer.cross_block = CrossAttentionBlock<Scalar>(params, p + ".cross", config, rng);
    layers_.push_back(std::move(layer));
  }
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> Encoder<Scalar>::self_step(const EncoderLayer<Scalar>& layer,
                                                                     const Tensor<Scalar>& f, const Tensor<Scalar>& s,
                                                                     const Mask& joint_mask,
                                                                     Tensor<Scalar>* s_pre_norm) const {
  const Index ke = f.dim(0);
  const Tensor<Scalar> x = layer.self_block(concat({f, s}, 0), &joint_mask);
  if (s_pre_norm) *s_pre_norm = slice(x, 0, ke, s.dim(0));
  auto parts = split(layer.norm(x), 0, {ke, s.dim(0)});
  return {parts[0], parts[1]};
}

template <typename Scalar>
EncoderOutput<Scalar> Encoder<Scalar>::operator()(const Tensor<Scalar>& motion, const Tensor<Scalar>& scene,
                                                  const Mask& scene_valid) const {
  if (static_cast<Index>(scene_valid.size()) != scene.dim(0))
    throw ShapeError("encoder", "scene mask of length " + std::to_string(scene_valid.size()) + " for " +
                                    shape_str(scene.shape()));
  EncoderOutput<Scalar> out;
  Tensor<Scalar> s = scene;
  if (variant_ == EncoderVariant::no_motion_tokens) {
    for (const auto& layer : layers_) {
      s = layer.norm(layer.self_block(s, &scene_valid));
      out.layers.push_back({{}, {}, {}, s});
    }
    out.scene = s;
    return out;
  }

  Tensor<Scalar> f = motion;
  Mask joint(static_cast<std::size_t>(f.dim(0)), 1);
  joint.insert(joint.end(), scene_valid.begin(), scene_valid.end());
  Tensor<Scalar> f_cross = motion;  // cross-branch chain of the fused-once variant
  for (const auto& layer : layers_) {
    LayerTrace<Scalar> trace;
    switch (variant_) {
      case EncoderVariant::full:
      case EncoderVariant::self_only:
      case EncoderVariant::no_interaction: {
        Tensor<Scalar> s_raw;
        auto [f_sa, s_l] = self_step(layer, f, s, joint, cross_kv_post_norm_ ? nullptr : &s_raw);
        const Tensor<Scalar>& kv = cross_kv_post_norm_ ? s_l : s_raw;
        trace.f_sa = f_sa;
        if (variant_ == EncoderVariant::full) {
          trace.f_ca = layer.cross_block(f, kv, &scene_valid);
          f = add(f_sa, trace.f_ca);
        } else if (variant_ == EncoderVariant::no_interaction) {
          f_cross = layer.cross_block(f_cross, kv, &scene_valid);
          trace.f_ca = f_cross;
          f = f_sa;
        } else {
          f = f_sa;
        }
        s = s_l;
        break;
      }
      case EncoderVariant::cross_only: {
        const Tensor<Scalar> s_raw = layer.self_block(s, &scene_valid);
        const Tensor<Scalar> s_l = layer.norm(s_raw);
        trace.f_ca = layer.cross_block(f, cross_kv_post_norm_ ? s_l : s_raw, &scene_valid);
        f = add(f, trace.f_ca);
        s = s_l;
        break;
      }
      case EncoderVariant::reversed: {
        trace.f_ca = layer.cross_block(f, s, &scene_valid);
        auto [f_l, s_l] = self_step(layer, add(f, trace.f_ca), s, joint, nullptr);
        trace.f_sa = f_l;
        f = f_l;
        s = s_l;
        break;
      }
      case EncoderVariant::parallel: {
        trace.f_ca = layer.cross_block(f, s, &scene_valid);
        auto [f_sa, s_l] = self_step(layer, f, s, joint, nullptr);
        trace.f_sa = f_sa;
        f = add(f_sa, trace.f_ca);
        s = s_l;
        break;
      }
      case EncoderVariant::no_motion_tokens:
        break;
    }
    trace.motion = variant_ == EncoderVariant::no_interaction ? add(f, f_cross) : f;
    trace.scene = s;
    out.layers.push_back(std::move(trace));
  }
  out.motion = variant_ == EncoderVariant::no_interaction ? add(f, f_cross) : f;
  out.scene = s;
  return out;
}

template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template class SelfAttentionBlock<float>;
template class SelfAttentionBlock<double>;
template class CrossAttentionBlock<float>;
template class CrossAttentionBlock<double>;
template class Encoder<float>;
template class Encoder<double>;

}  // namespace hamf
