#include "hamf/dataset.hpp"

#include <stdexcept>

namespace hamf {

std::uint64_t scenario_seed(std::uint64_t seed, Index i) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(i) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

GeneratedDataset generate_dataset(const DatasetSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("generate: count must be >= 1");
  if (spec.templates.empty()) throw std::invalid_argument("generate: no templates given");
  GeneratedDataset out;
  out.manifest.seed = spec.seed;
  for (Index i = 0; i < spec.count; ++i) {
    const Maneuver m = spec.templates[static_cast<std::size_t>(i) % spec.templates.size()];
    const std::uint64_t seed = scenario_seed(spec.seed, i);
    Scenario s = generate_scenario(seed, m, spec.agents, spec.polylines, spec.generator);
    out.manifest.entries.push_back({s.id, s.id + ".json", std::string(to_string(m)), seed});
    out.scenarios.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const GeneratedDataset& data, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw std::runtime_error(dir.string() + " is not empty (use --force to overwrite)");
      std::vector<fs::path> stale;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") stale.push_back(e.path());
      for (const auto& p : stale) fs::remove(p);
    }
  }
  fs::create_directories(dir);
  for (std::size_t i = 0; i < data.scenarios.size(); ++i)
    save_scenario(dir / data.manifest.entries[i].file, data.scenarios[i]);
  save_manifest(dir, data.manifest);
}

}  // namespace hamf
