#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hamf/train.hpp"

namespace hamf {

struct AblationVariant {
  std::string label;
  std::function<void(ModelConfig&)> apply;
};

/// Row sets of the ablation tables: "encoder", "decoder", "depth", "ke" and
/// "arch". Throws std::invalid_argument for any other name.
std::vector<AblationVariant> ablation_suite(const std::string& suite);
const std::vector<std::string>& ablation_suite_names();

struct VariantResult {
  std::string label;
  ModelConfig model;
  Index params = 0;        // of the trained configuration
  Index paper_params = 0;  // same variant applied to the full-size configuration
  std::vector<std::uint64_t> seeds;
  std::vector<MetricReport> reports;  // one per seed, validation set
};

struct AblationOptions {
  ModelConfig base = desk_model_config();
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  /// Per-run training logs go to out_dir/<label>/seed-<s>/ when set.
  std::filesystem::path out_dir;
  std::ostream* progress = nullptr;
};

/// Trains every variant once per seed (model init and data order both use
/// the seed) on the same split and evaluates it on `val_set`.
std::vector<VariantResult> run_ablation(const std::vector<AblationVariant>& variants,
                                        const std::vector<PreparedScenario>& train_set,
                                        const std::vector<Scenario>& val_set, const AblationOptions& options);

/// Mean and sample standard deviation (0 for a single seed).
std::pair<double, double> mean_std(const std::vector<double>& v);

/// Table with one row per variant: parameter counts and mean ± std of every
/// metric over seeds.
std::string ablation_markdown(const std::string& suite, const std::vector<VariantResult>& results);
/// One row per (variant, seed) plus the parameter counts.
std::string ablation_csv(const std::vector<VariantResult>& results);

}  // namespace hamf
