#include "hamf/render.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

#include "hamf/io.hpp"

namespace hamf {

namespace {

constexpr const char* kModeColors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};

struct Canvas {
  Eigen::Vector2d lo, hi;
  double scale = 1.0;
  double height = 0.0;
  double ox = 0.0, oy = 0.0;

  Eigen::Vector2d map(const Point2& p) const {
    return {ox + (p.x() - lo.x()) * scale, height - oy - (p.y() - lo.y()) * scale};
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string coord(const Canvas& c, const Point2& p) {
  const Eigen::Vector2d q = c.map(p);
  return fmt("%.2f", q.x()) + "," + fmt("%.2f", q.y());
}

void extend(Eigen::Vector2d& lo, Eigen::Vector2d& hi, const Point2& p) {
  lo = lo.cwiseMin(p);
  hi = hi.cwiseMax(p);
}

const char* lane_style(LaneType t) {
  switch (t) {
    case LaneType::lane: return R"(stroke="#9a9a9a" stroke-width="1.5")";
    case LaneType::boundary: return R"(stroke="#5a5a5a" stroke-width="1" stroke-dasharray="4,3")";
    case LaneType::crosswalk: return R"(stroke="#c8b273" stroke-width="3")";
  }
  return "";
}

void polyline(std::ostringstream& out, const Canvas& c, const std::vector<Point2>& pts, const std::string& style) {
  if (pts.size() < 2) return;
  out << "<polyline fill=\"none\" " << style << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) out << (i ? " " : "") << coord(c, pts[i]);
  out << "\"/>\n";
}

}  // namespace

std::string render_svg(const Scenario& s, const PredictionSet* predictions, const RenderOptions& options) {
  if (predictions && predictions->scenario_id != s.id)
    throw std::invalid_argument("render: prediction id '" + predictions->scenario_id + "' does not match scenario '" +
                                s.id + "'");
  const Index hist = s.history_steps;

  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (const auto& a : s.agents)
    for (std::size_t t = 0; t < a.positions.size(); ++t)
      if (a.valid[t]) extend(lo, hi, a.positions[t]);
  for (const auto& m : s.map)
    for (std::size_t i = 0; i < m.points.size(); ++i)
      if (m.valid[i]) extend(lo, hi, m.points[i]);
  if (predictions)
    for (const auto& traj : predictions->trajectories)
      for (Index t = 0; t < traj.rows(); ++t) extend(lo, hi, traj.row(t).transpose());
  if (!lo.allFinite()) lo = hi = Eigen::Vector2d::Zero();
  lo.array() -= options.margin;
  hi.array() += options.margin;

  Canvas c;
  c.lo = lo;
  c.hi = hi;
  c.height = options.height;
  const Eigen::Vector2d span = (hi - lo).cwiseMax(1e-6);
  c.scale = std::min(options.width / span.x(), options.height / span.y());
  c.ox = 0.5 * (options.width - span.x() * c.scale);
  c.oy = 0.5 * (options.height - span.y() * c.scale);

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt("%.0f", options.width) << "\" height=\""
      << fmt("%.0f", options.height) << "\" viewBox=\"0 0 " << fmt("%.0f", options.width) << " "
      << fmt("%.0f", options.height) << "\">\n"
      << "<title>" << s.id << "</title>\n"
      << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  out << "<g id=\"map\">\n";
  for (const auto& m : s.map) {
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < m.points.size(); ++i)
      if (m.valid[i]) pts.push_back(m.points[i]);
    polyline(out, c, pts, lane_style(m.lane_type));
  }
  out << "</g>\n";

  // Histories fade in toward the present: segment opacity grows with time.
  out << "<g id=\"history\">\n";
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const auto& track = s.agents[a];
    const bool focal = static_cast<Index>(a) == s.focal_index;
    const char* color = focal ? "#1f4e9c" : "#707070";
    Index prev = -1;
    for (Index t = 0; t < hist; ++t) {
      if (!track.valid[static_cast<std::size_t>(t)]) continue;
      if (prev >= 0) {
        const double alpha = 0.1 + 0.9 * static_cast<double>(t) / static_cast<double>(std::max<Index>(1, hist - 1));
        out << "<line x1=\"" << fmt("%.2f", c.map(track.positions[static_cast<std::size_t>(prev)]).x()) << "\" y1=\""
            << fmt("%.2f", c.map(track.positions[static_cast<std::size_t>(prev)]).y()) << "\" x2=\""
            << fmt("%.2f", c.map(track.positions[static_cast<std::size_t>(t)]).x()) << "\" y2=\""
            << fmt("%.2f", c.map(track.positions[static_cast<std::size_t>(t)]).y()) << "\" stroke=\"" << color
            << "\" stroke-width=\"" << (focal ? "3" : "2") << "\" stroke-opacity=\"" << fmt("%.3f", alpha)
            << "\" stroke-linecap=\"round\"/>\n";
      }
      prev = t;
    }
    if (prev >= 0) {
      const Eigen::Vector2d q = c.map(track.positions[static_cast<std::size_t>(prev)]);
      out << "<circle cx=\"" << fmt("%.2f", q.x()) << "\" cy=\"" << fmt("%.2f", q.y()) << "\" r=\""
          << (focal ? "5" : "3.5") << "\" fill=\"" << color << "\"/>\n";
    }
  }
  out << "</g>\n";

  out << "<g id=\"ground-truth\">\n";
  {
    const auto& f = s.focal();
    std::vector<Point2> pts;
    const Index last = last_observed_step(f, hist);
    if (last >= 0) pts.push_back(f.positions[static_cast<std::size_t>(last)]);
    for (Index t = hist; t < s.total_steps(); ++t)
      if (f.valid[static_cast<std::size_t>(t)]) pts.push_back(f.positions[static_cast<std::size_t>(t)]);
    polyline(out, c, pts, R"(stroke="#d62728" stroke-width="2.5" stroke-dasharray="6,4")");
  }
  out << "</g>\n";

  if (predictions) {
    out << "<g id=\"predictions\">\n";
    for (std::size_t k = 0; k < predictions->trajectories.size(); ++k) {
      const auto& traj = predictions->trajectories[k];
      const double p = predictions->probabilities[k];
      const double alpha = options.min_opacity + (1.0 - options.min_opacity) * std::clamp(p, 0.0, 1.0);
      const char* color = kModeColors[k % std::size(kModeColors)];
      std::vector<Point2> pts;
      for (Index t = 0; t < traj.rows(); ++t) pts.push_back(traj.row(t).transpose());
      polyline(out, c, pts,
               std::string("stroke=\"") + color + "\" stroke-width=\"2\" stroke-opacity=\"" + fmt("%.3f", alpha) + "\"");
      if (!pts.empty()) {
        const Eigen::Vector2d q = c.map(pts.back());
        out << "<circle cx=\"" << fmt("%.2f", q.x()) << "\" cy=\"" << fmt("%.2f", q.y()) << "\" r=\"3\" fill=\"" << color
            << "\" fill-opacity=\"" << fmt("%.3f", alpha) << "\"/>\n";
      }
    }
    out << "</g>\n<g id=\"legend\" font-family=\"monospace\" font-size=\"12\">\n";
    for (std::size_t k = 0; k < predictions->trajectories.size(); ++k) {
      const double y = 18.0 + 16.0 * static_cast<double>(k);
      out << "<rect x=\"10\" y=\"" << fmt("%.0f", y - 9) << "\" width=\"10\" height=\"10\" fill=\""
          << kModeColors[k % std::size(kModeColors)] << "\"/>\n"
          << "<text x=\"26\" y=\"" << fmt("%.0f", y) << "\" data-probability=\""
          << fmt("%.17g", predictions->probabilities[k]) << "\">mode " << k << "  p=" << fmt("%.3f", predictions->probabilities[k])
          << "</text>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_svg(const std::filesystem::path& path, const Scenario& s, const PredictionSet* predictions,
               const RenderOptions& options) {
  write_text_file(path, render_svg(s, predictions, options));
}

}  // namespace hamf
