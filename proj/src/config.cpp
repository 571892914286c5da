#include "hamf/config.hpp"

#include <set>

#include "hamf/io.hpp"

namespace hamf {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw std::invalid_argument(section + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument(section + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j,
                 {"d_model", "n_heads", "ffn_mult", "encoder_layers", "variant", "motion_tokens", "modes", "decoder",
                  "decoder_depth", "head_hidden", "agent_blocks", "map_hidden", "pe_frequencies", "d_state", "expand",
                  "conv_width", "history_steps", "future_steps", "aux_head", "cross_kv_post_norm",
                  "probabilities_after_decoder", "motion_token_pe", "scan"},
                 "model");
  ModelConfig c;
  read(j, "d_model", c.d_model);
  read(j, "n_heads", c.n_heads);
  read(j, "ffn_mult", c.ffn_mult);
  read(j, "encoder_layers", c.encoder_layers);
  if (j.contains("variant")) c.variant = parse_encoder_variant(j.at("variant").get<std::string>());
  read(j, "motion_tokens", c.motion_tokens);
  read(j, "modes", c.modes);
  if (j.contains("decoder")) c.decoder = parse_decoder_kind(j.at("decoder").get<std::string>());
  read(j, "decoder_depth", c.decoder_depth);
  read(j, "head_hidden", c.head_hidden);
  read(j, "agent_blocks", c.agent_blocks);
  read(j, "map_hidden", c.map_hidden);
  read(j, "pe_frequencies", c.pe_frequencies);
  read(j, "d_state", c.d_state);
  read(j, "expand", c.expand);
  read(j, "conv_width", c.conv_width);
  read(j, "history_steps", c.history_steps);
  read(j, "future_steps", c.future_steps);
  read(j, "aux_head", c.aux_head);
  read(j, "cross_kv_post_norm", c.cross_kv_post_norm);
  read(j, "probabilities_after_decoder", c.probabilities_after_decoder);
  read(j, "motion_token_pe", c.motion_token_pe);
  if (j.contains("scan")) {
    const auto s = j.at("scan").get<std::string>();
    if (s == "sequential")
      c.scan = ScanAlgorithm::sequential;
    else if (s == "chunked")
      c.scan = ScanAlgorithm::chunked;
    else
      throw std::invalid_argument("model: unknown scan algorithm '" + s + "'");
  }
  c.validate();
  return c;
}

json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"ffn_mult", c.ffn_mult},
          {"encoder_layers", c.encoder_layers},
          {"variant", std::string(to_string(c.variant))},
          {"motion_tokens", c.motion_tokens},
          {"modes", c.modes},
          {"decoder", std::string(to_string(c.decoder))},
          {"decoder_depth", c.decoder_depth},
          {"head_hidden", c.head_hidden},
          {"agent_blocks", c.agent_blocks},
          {"map_hidden", c.map_hidden},
          {"pe_frequencies", c.pe_frequencies},
          {"d_state", c.d_state},
          {"expand", c.expand},
          {"conv_width", c.conv_width},
          {"history_steps", c.history_steps},
          {"future_steps", c.future_steps},
          {"aux_head", c.aux_head},
          {"cross_kv_post_norm", c.cross_kv_post_norm},
          {"probabilities_after_decoder", c.probabilities_after_decoder},
          {"motion_token_pe", c.motion_token_pe},
          {"scan", c.scan == ScanAlgorithm::sequential ? "sequential" : "chunked"}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j, {"epochs", "batch_size", "lr0", "lr_min", "weight_decay", "seed", "eval_every"}, "train");
  TrainConfig c;
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "lr0", c.lr0);
  read(j, "lr_min", c.lr_min);
  read(j, "weight_decay", c.weight_decay);
  read(j, "seed", c.seed);
  read(j, "eval_every", c.eval_every);
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size},     {"lr0", c.lr0},
          {"lr_min", c.lr_min},       {"weight_decay", c.weight_decay}, {"seed", c.seed},
          {"eval_every", c.eval_every}};
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"model", "train", "data", "init_seed"}, "config");
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"train", "val"}, "data");
    if (d.contains("train")) c.train_dir = d.at("train").get<std::string>();
    if (d.contains("val")) c.val_dir = d.at("val").get<std::string>();
  }
  read(j, "init_seed", c.init_seed);
  return c;
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"data", {{"train", c.train_dir.string()}, {"val", c.val_dir.string()}}},
          {"init_seed", c.init_seed}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), e.byte, e.what());
  }
  RunConfig c = run_config_from_json(j);
  // Relative data paths are taken from the config file's directory; the
  // resolved form is absolute so an echoed copy resolves identically.
  const auto base = std::filesystem::absolute(path).parent_path();
  if (!c.train_dir.empty()) c.train_dir = (base / c.train_dir).lexically_normal();
  if (!c.val_dir.empty()) c.val_dir = (base / c.val_dir).lexically_normal();
  return c;
}

std::string run_config_to_string(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

std::string to_json_string(const ModelConfig& c) { return to_json(c).dump(); }
std::string to_json_string(const TrainConfig& c) { return to_json(c).dump(); }

}  // namespace hamf
