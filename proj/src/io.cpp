#include "hamf/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hamf {

using nlohmann::json;

ParseError::ParseError(const std::string& source, std::size_t byte_offset, const std::string& detail)
    : std::runtime_error(source + ": parse error at byte " + std::to_string(byte_offset) + ": " + detail),
      byte_offset_(byte_offset) {}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, e.byte, e.what());
  }
}

void check_format(const json& j, std::string_view expected, const std::string& source) {
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string())
    throw ParseError(source, 0, "missing \"format\" tag");
  const auto tag = j["format"].get<std::string>();
  if (tag == expected) return;
  const auto family = expected.substr(0, expected.find('/') + 1);
  if (tag.rfind(std::string(family), 0) == 0)
    throw VersionError(source + ": unsupported format version '" + tag + "' (this build reads '" +
                       std::string(expected) + "')");
  throw ParseError(source, 0, "unexpected format tag '" + tag + "'");
}

json point_json(const Point2& p) { return json::array({p.x(), p.y()}); }

Point2 point_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json scenario_json(const Scenario& s) {
  json agents = json::array();
  for (const auto& a : s.agents) {
    json pos = json::array(), valid = json::array();
    for (std::size_t t = 0; t < a.positions.size(); ++t) {
      pos.push_back(point_json(a.positions[t]));
      valid.push_back(a.valid[t] != 0);
    }
    agents.push_back({{"category", std::string(to_string(a.category))},
                      {"positions", std::move(pos)},
                      {"headings", a.headings},
                      {"valid", std::move(valid)}});
  }
  json map = json::array();
  for (const auto& pl : s.map) {
    json pts = json::array(), valid = json::array();
    for (std::size_t k = 0; k < pl.points.size(); ++k) {
      pts.push_back(point_json(pl.points[k]));
      valid.push_back(pl.valid[k] != 0);
    }
    map.push_back({{"lane_type", std::string(to_string(pl.lane_type))}, {"points", std::move(pts)}, {"valid", std::move(valid)}});
  }
  return {{"format", kScenarioFormat},
          {"id", s.id},
          {"sample_rate", s.sample_rate},
          {"history_steps", s.history_steps},
          {"future_steps", s.future_steps},
          {"focal_index", s.focal_index},
          {"agents", std::move(agents)},
          {"map", std::move(map)}};
}

std::vector<std::uint8_t> mask_from(const json& j) {
  std::vector<std::uint8_t> m;
  for (const auto& v : j) m.push_back(v.get<bool>() ? 1 : 0);
  return m;
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.id = j.at("id").get<std::string>();
  s.sample_rate = j.at("sample_rate").get<double>();
  s.history_steps = j.at("history_steps").get<Index>();
  s.future_steps = j.at("future_steps").get<Index>();
  s.focal_index = j.at("focal_index").get<Index>();
  for (const auto& ja : j.at("agents")) {
    AgentTrack a;
    a.category = parse_agent_category(ja.at("category").get<std::string>());
    for (const auto& p : ja.at("positions")) a.positions.push_back(point_from(p));
    a.headings = ja.at("headings").get<std::vector<double>>();
    a.valid = mask_from(ja.at("valid"));
    s.agents.push_back(std::move(a));
  }
  for (const auto& jp : j.at("map")) {
    MapPolyline pl;
    pl.lane_type = parse_lane_type(jp.at("lane_type").get<std::string>());
    for (const auto& p : jp.at("points")) pl.points.push_back(point_from(p));
    pl.valid = mask_from(jp.at("valid"));
    s.map.push_back(std::move(pl));
  }
  return s;
}

}  // namespace

std::string scenario_to_string(const Scenario& s) { return scenario_json(s).dump(1) + "\n"; }

Scenario scenario_from_string(const std::string& text, const std::string& source) {
  const json j = parse_json(text, source);
  check_format(j, kScenarioFormat, source);
  Scenario s;
  try {
    s = scenario_from_json(j);
  } catch (const std::exception& e) {
    throw ParseError(source, 0, e.what());
  }
  const auto violations = scenario_violations(s);
  if (!violations.empty()) throw ParseError(source, 0, "invalid scenario: " + violations.front());
  return s;
}

void save_scenario(const std::filesystem::path& path, const Scenario& s) {
  write_text_file(path, scenario_to_string(s));
}

Scenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_string(read_text_file(path), path.string());
}

std::string predictions_to_string(const PredictionSet& p) {
  json modes = json::array();
  for (std::size_t k = 0; k < p.trajectories.size(); ++k) {
    json pts = json::array();
    const auto& tr = p.trajectories[k];
    for (Index t = 0; t < tr.rows(); ++t) pts.push_back(json::array({tr(t, 0), tr(t, 1)}));
    modes.push_back({{"probability", p.probabilities.at(k)}, {"trajectory", std::move(pts)}});
  }
  json j = {{"format", kPredictionFormat}, {"scenario_id", p.scenario_id}, {"modes", std::move(modes)}};
  return j.dump(1) + "\n";
}

PredictionSet predictions_from_string(const std::string& text, const std::string& source) {
  const json j = parse_json(text, source);
  check_format(j, kPredictionFormat, source);
  PredictionSet p;
  try {
    p.scenario_id = j.at("scenario_id").get<std::string>();
    for (const auto& m : j.at("modes")) {
      p.probabilities.push_back(m.at("probability").get<double>());
      const auto& pts = m.at("trajectory");
      Eigen::MatrixX2d tr(static_cast<Index>(pts.size()), 2);
      for (std::size_t t = 0; t < pts.size(); ++t) tr.row(static_cast<Index>(t)) = point_from(pts[t]).transpose();
      p.trajectories.push_back(std::move(tr));
    }
  } catch (const std::exception& e) {
    throw ParseError(source, 0, e.what());
  }
  return p;
}

void save_predictions(const std::filesystem::path& path, const PredictionSet& p) {
  write_text_file(path, predictions_to_string(p));
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  return predictions_from_string(read_text_file(path), path.string());
}

void save_manifest(const std::filesystem::path& dir, const Manifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"id", e.id}, {"file", e.file}, {"template", e.scenario_template}, {"seed", e.seed}});
  json j = {{"format", kManifestFormat}, {"seed", m.seed}, {"count", m.entries.size()}, {"scenarios", std::move(entries)}};
  write_text_file(dir / kManifestName, j.dump(1) + "\n");
}

Manifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  const std::string source = path.string();
  const json j = parse_json(read_text_file(path), source);
  check_format(j, kManifestFormat, source);
  Manifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("scenarios"))
      m.entries.push_back({e.at("id").get<std::string>(), e.at("file").get<std::string>(),
                           e.at("template").get<std::string>(), e.at("seed").get<std::uint64_t>()});
  } catch (const std::exception& e) {
    throw ParseError(source, 0, e.what());
  }
  return m;
}

std::vector<Scenario> load_dataset(const std::filesystem::path& dir) {
  const Manifest m = load_manifest(dir);
  std::vector<Scenario> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    out.push_back(load_scenario(dir / e.file));
    if (out.back().id != e.id)
      throw ParseError((dir / e.file).string(), 0, "id '" + out.back().id + "' does not match manifest id '" + e.id + "'");
  }
  return out;
}

}  // namespace hamf
