#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "hamf/model_config.hpp"
#include "hamf/train.hpp"

namespace hamf {

/// Everything a training run needs. Serialized as
/// {"model": {...}, "train": {...}, "data": {"train": dir, "val": dir}, "init_seed": n}.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path train_dir;
  std::filesystem::path val_dir;
  std::uint64_t init_seed = 0;

  bool operator==(const RunConfig&) const = default;
};

/// Missing keys keep their defaults; unknown keys throw std::invalid_argument
/// naming the key and its section.
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
/// Pretty JSON of the fully resolved configuration.
std::string run_config_to_string(const RunConfig& c);

}  // namespace hamf
