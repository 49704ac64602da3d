#pragma once

#include <optional>
#include <string>
#include <vector>

namespace safeeval {

struct PlotSeries {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x;
  std::vector<double> y;
  /// Half-width of a shaded band around y; empty for none. NaN entries skip.
  std::vector<double> band;
  bool dashed = false;
};

struct HorizontalLine {
  std::string label;
  double y = 0.0;
  std::string color = "#444444";
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::vector<HorizontalLine> baselines;
  int width = 720;
  int height = 440;
};

/// Standalone SVG document. Non-finite points are left out of lines.
std::string render_svg(const LineChart &chart);

/// Escapes &, <, >, " and ' for use in XML text and attributes.
std::string xml_escape(const std::string &text);

/// Roughly `count` round tick positions covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int count = 6);

} // namespace safeeval
