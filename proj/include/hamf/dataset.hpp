#pragma once

#include <filesystem>
#include <vector>

#include "hamf/io.hpp"
#include "hamf/scene.hpp"

namespace hamf {

inline constexpr Index kDefaultAgents = 6;
inline constexpr Index kDefaultPolylines = 16;
inline constexpr Index kDefaultTrainCount = 1000;
inline constexpr Index kDefaultValCount = 200;
inline constexpr std::uint64_t kDefaultTrainSeed = 1;
inline constexpr std::uint64_t kDefaultValSeed = 2;

struct DatasetSpec {
  std::uint64_t seed = kDefaultTrainSeed;
  Index count = kDefaultTrainCount;
  /// Scenario i uses templates[i % templates.size()].
  std::vector<Maneuver> templates = all_maneuvers();
  Index agents = kDefaultAgents;
  Index polylines = kDefaultPolylines;
  GeneratorOptions generator;
};

struct GeneratedDataset {
  Manifest manifest;
  std::vector<Scenario> scenarios;
};

/// Per-scenario seed of entry `i` of a dataset generated with `seed`.
std::uint64_t scenario_seed(std::uint64_t seed, Index i);

GeneratedDataset generate_dataset(const DatasetSpec& spec);

/// Writes one file per scenario plus the manifest. A directory that already
/// holds files is an error unless `force`, in which case its .json files are
/// replaced.
void write_dataset(const std::filesystem::path& dir, const GeneratedDataset& data, bool force);

}  // namespace hamf
