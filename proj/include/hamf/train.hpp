#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hamf/loss.hpp"
#include "hamf/metrics.hpp"
#include "hamf/model.hpp"
#include "hamf/optim.hpp"

namespace hamf {

struct TrainConfig {
  Index epochs = 120;
  Index batch_size = 32;
  double lr0 = 1e-3;
  double lr_min = 0.0;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  /// Evaluate on the validation set every this many epochs (0 = never; the
  /// final epoch is always evaluated when a validation set is given).
  Index eval_every = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// A scenario in the focal frame with everything the model and loss need.
struct PreparedScenario {
  std::string id;
  SceneFeatures features;
  Targets targets;
};

PreparedScenario prepare_scenario(const Scenario& s);
std::vector<PreparedScenario> prepare_dataset(const std::vector<Scenario>& data);

/// Data order of one epoch: a permutation seeded by (seed, epoch).
std::vector<Index> epoch_order(Index n, std::uint64_t seed, Index epoch);

/// Raised when the loss or a gradient becomes non-finite.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, Index epoch, Index step, std::vector<std::string> batch_ids)
      : std::runtime_error(what), epoch(epoch), step(step), batch_ids(std::move(batch_ids)) {}
  Index epoch;
  Index step;
  std::vector<std::string> batch_ids;
};

struct LossTotals {
  double total = 0, regression = 0, classification = 0, auxiliary = 0;
};

/// Mean loss over a batch; gradients are accumulated into the model's
/// parameters (scaled by 1 / batch size) when `accumulate` is set.
LossTotals batch_loss(const HamfModel<float>& model, const std::vector<const PreparedScenario*>& batch,
                      bool accumulate);

struct EpochSummary {
  Index epoch = 0;
  Index step = 0;  // optimizer steps completed after this epoch
  double lr_first = 0.0;
  LossTotals train;
  std::optional<MetricReport> val;
};

struct TrainProgress {
  Index epoch = 0;  // epochs completed
  Index step = 0;   // optimizer steps completed
};

struct TrainOptions {
  /// Directory receiving train_log.jsonl, checkpoint.bin and, on abort,
  /// nan_batch.json. Empty = no files.
  std::filesystem::path out_dir;
  std::ostream* progress = nullptr;
  /// Stop after this many epochs of the schedule (the cosine schedule still
  /// spans config.epochs). 0 = run to the end.
  Index stop_after_epochs = 0;
  /// Recorded in checkpoints so a resumed run can be traced to its initialization.
  std::uint64_t init_seed = 0;
};

struct TrainResult {
  TrainProgress progress;
  std::vector<EpochSummary> epochs;
};

/// Trains `model` in place. Starts from `start` (for resumed runs; the
/// optimizer must carry the matching state).
TrainResult train(HamfModel<float>& model, AdamW<float>& optimizer, const TrainConfig& config,
                  const std::vector<PreparedScenario>& train_set, const std::vector<Scenario>& val_set,
                  const TrainOptions& options = {}, TrainProgress start = {});

/// Batch-of-one prediction for every scenario, in each scenario's own frame.
MetricReport evaluate_model(const HamfModel<float>& model, const std::vector<Scenario>& data);

// Checkpoint layout: 8-byte magic "HAMFCKPT", u32 format version, u64 header
// length, JSON header (model config, train config, progress, parameter
// names and shapes), then for every parameter its values, first moment and
// second moment as little-endian f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  TrainProgress progress;
  std::uint64_t init_seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const HamfModel<float>& model,
                     const AdamW<float>* optimizer, const Checkpoint& meta);
/// Reads the header only.
Checkpoint read_checkpoint_header(const std::filesystem::path& path);
/// Loads parameters (and optimizer state when given) into a model built from
/// the checkpoint's config. Throws on any name or shape mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path, HamfModel<float>& model, AdamW<float>* optimizer);

std::string to_json_string(const ModelConfig& c);
std::string to_json_string(const TrainConfig& c);

}  // namespace hamf
