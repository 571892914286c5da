#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hamf/scene.hpp"

namespace hamf {

inline constexpr std::string_view kScenarioFormat = "hamf-scn/1";
inline constexpr std::string_view kPredictionFormat = "hamf-pred/1";
inline constexpr std::string_view kManifestFormat = "hamf-manifest/1";

/// Malformed input. `byte_offset` is the position where parsing stopped
/// (0 when the text parsed but a field was wrong).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t byte_offset, const std::string& detail);
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Well-formed input carrying a format tag this build does not understand.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string scenario_to_string(const Scenario& s);
Scenario scenario_from_string(const std::string& text, const std::string& source = "<string>");
void save_scenario(const std::filesystem::path& path, const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);

std::string predictions_to_string(const PredictionSet& p);
PredictionSet predictions_from_string(const std::string& text, const std::string& source = "<string>");
void save_predictions(const std::filesystem::path& path, const PredictionSet& p);
PredictionSet load_predictions(const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::string file;  // relative to the manifest's directory
  std::string scenario_template;
  std::uint64_t seed = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  bool operator==(const Manifest&) const = default;
};

inline constexpr std::string_view kManifestName = "manifest.json";

void save_manifest(const std::filesystem::path& dir, const Manifest& m);
Manifest load_manifest(const std::filesystem::path& dir);

/// Loads every scenario listed in `dir`/manifest.json, in manifest order.
std::vector<Scenario> load_dataset(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never observe a
/// partially written file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace hamf
