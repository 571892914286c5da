#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hamf/scene.hpp"
#include "hamf/ssm.hpp"

namespace hamf {

enum class EncoderVariant {
  full,              // self over concat(F, S), then cross F -> S, summed per layer
  self_only,         // M1
  cross_only,        // M2
  no_interaction,    // M3: branches fused once after the last layer
  reversed,          // Mc: cross before self
  parallel,          // Mp: both branches from the previous layer's tokens
  no_motion_tokens,  // Mb
};

enum class DecoderKind { uni_mamba, bi_mamba, attention, none };

std::string_view to_string(EncoderVariant v);
std::string_view to_string(DecoderKind k);
/// Accepts the enum name or the short ablation label (M1, M2, M3, Mc, Mp, Mb).
EncoderVariant parse_encoder_variant(std::string_view s);
DecoderKind parse_decoder_kind(std::string_view s);

struct ModelConfig {
  Index d_model = 128;
  Index n_heads = 8;
  Index ffn_mult = 4;
  Index encoder_layers = 5;
  EncoderVariant variant = EncoderVariant::full;
  Index motion_tokens = 6;  // K_e
  Index modes = 6;          // K
  DecoderKind decoder = DecoderKind::uni_mamba;
  Index decoder_depth = 1;
  Index head_hidden = 128;
  Index agent_blocks = 2;
  Index map_hidden = 64;
  Index pe_frequencies = 64;
  Index d_state = 16;
  Index expand = 2;
  Index conv_width = 4;
  Index history_steps = kHistorySteps;
  Index future_steps = kFutureSteps;
  bool aux_head = true;
  /// Cross-attention keys read the scene tokens after the post-self-attention
  /// layer norm (true) or before it (false).
  bool cross_kv_post_norm = true;
  /// Probability head reads the decoded tokens (true) or the encoder output.
  bool probabilities_after_decoder = true;
  /// Adds the focal pose encoding to the motion tokens as well.
  bool motion_token_pe = false;
  ScanAlgorithm scan = ScanAlgorithm::chunked;

  SsmConfig ssm() const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// C=16, two encoder layers, three motion tokens, 10/12-step horizons.
ModelConfig tiny_model_config();
/// Reduced width and depth sized for single-core CPU training runs.
ModelConfig desk_model_config();

}  // namespace hamf
