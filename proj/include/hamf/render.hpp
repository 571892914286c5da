#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "hamf/scene.hpp"

namespace hamf {

struct RenderOptions {
  double width = 800.0;   // px
  double height = 800.0;  // px
  double margin = 8.0;    // m around the drawn content
  /// Opacity of a mode with probability p is min_opacity + (1 - min_opacity) * p.
  double min_opacity = 0.15;
};

/// Static figure of one scenario: map polylines, observed histories drawn
/// with a fading gradient, the focal ground-truth future and, when given, the
/// predicted modes with a probability legend. Output is a pure function of
/// the inputs. Throws std::invalid_argument when the prediction belongs to a
/// different scenario.
std::string render_svg(const Scenario& s, const PredictionSet* predictions = nullptr, const RenderOptions& options = {});

void write_svg(const std::filesystem::path& path, const Scenario& s, const PredictionSet* predictions = nullptr,
               const RenderOptions& options = {});

}  // namespace hamf
