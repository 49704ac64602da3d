#include "safeeval/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace safeeval {

std::string xml_escape(const std::string &text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    case '\'': out += "&apos;"; break;
    default: out += c;
    }
  }
  return out;
}

std::vector<double> nice_ticks(double lo, double hi, int count) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(1, count - 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * step; t += step)
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return ticks;
}

std::string render_svg(const LineChart &chart) {
  const double left = 70, right = 170, top = 40, bottom = 55;
  const double pw = chart.width - left - right, ph = chart.height - top - bottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto take_y = [&](double y) {
    if (std::isfinite(y)) {
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  };
  for (const PlotSeries &s : chart.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      const double b = i < s.band.size() && std::isfinite(s.band[i]) ? s.band[i] : 0.0;
      take_y(s.y[i] - b);
      take_y(s.y[i] + b);
    }
  }
  for (const HorizontalLine &h : chart.baselines) take_y(h.y);
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 1.0, ymax += 1.0;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      chart.width, chart.height);
  svg += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                     left + pw / 2, xml_escape(chart.title));

  for (double t : nice_ticks(ymin, ymax)) {
    svg += fmt::format("<line x1=\"{0:.1f}\" x2=\"{1:.1f}\" y1=\"{2:.1f}\" y2=\"{2:.1f}\" stroke=\"#e5e5e5\"/>\n"
                       "<text x=\"{3:.1f}\" y=\"{4:.1f}\" text-anchor=\"end\">{5:g}</text>\n",
                       left, left + pw, sy(t), left - 6, sy(t) + 4, t);
  }
  for (double t : nice_ticks(xmin, xmax, std::min(11, static_cast<int>(xmax - xmin) + 1))) {
    svg += fmt::format("<line x1=\"{0:.1f}\" x2=\"{0:.1f}\" y1=\"{1:.1f}\" y2=\"{2:.1f}\" stroke=\"#999\"/>\n"
                       "<text x=\"{0:.1f}\" y=\"{3:.1f}\" text-anchor=\"middle\">{4:g}</text>\n",
                       sx(t), top + ph, top + ph + 5, top + ph + 19, t);
  }
  svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" "
                     "stroke=\"#333\"/>\n",
                     left, top, pw, ph);
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2,
                     static_cast<double>(chart.height) - 12, xml_escape(chart.x_label));
  svg += fmt::format("<text transform=\"translate(18 {:.1f}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
                     top + ph / 2, xml_escape(chart.y_label));

  for (const PlotSeries &s : chart.series) {
    if (s.band.empty()) continue;
    std::string upper, lower;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size() && i < s.band.size(); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(s.band[i])) continue;
      upper += fmt::format("{:.2f},{:.2f} ", sx(s.x[i]), sy(s.y[i] + s.band[i]));
      lower.insert(0, fmt::format("{:.2f},{:.2f} ", sx(s.x[i]), sy(s.y[i] - s.band[i])));
    }
    if (!upper.empty())
      svg += fmt::format("<polygon points=\"{}{}\" fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n", upper,
                         lower, xml_escape(s.color));
  }
  for (const HorizontalLine &h : chart.baselines) {
    svg += fmt::format("<line x1=\"{0:.1f}\" x2=\"{1:.1f}\" y1=\"{2:.1f}\" y2=\"{2:.1f}\" stroke=\"{3}\" "
                       "stroke-width=\"1.5\" stroke-dasharray=\"2 3\"/>\n",
                       left, left + pw, sy(h.y), xml_escape(h.color));
  }
  for (const PlotSeries &s : chart.series) {
    std::string points;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (std::isfinite(s.y[i])) points += fmt::format("{:.2f},{:.2f} ", sx(s.x[i]), sy(s.y[i]));
    if (points.empty()) continue;
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{}/>\n", points,
                       xml_escape(s.color), s.dashed ? " stroke-dasharray=\"6 4\"" : "");
  }

  double ly = top + 8;
  auto legend = [&](const std::string &label, const std::string &color, const char *dash) {
    svg += fmt::format("<line x1=\"{0:.1f}\" x2=\"{1:.1f}\" y1=\"{2:.1f}\" y2=\"{2:.1f}\" stroke=\"{3}\" "
                       "stroke-width=\"2\"{4}/>\n<text x=\"{5:.1f}\" y=\"{6:.1f}\">{7}</text>\n",
                       left + pw + 12, left + pw + 36, ly, xml_escape(color), dash, left + pw + 42, ly + 4,
                       xml_escape(label));
    ly += 18;
  };
  for (const PlotSeries &s : chart.series) legend(s.label, s.color, s.dashed ? " stroke-dasharray=\"6 4\"" : "");
  for (const HorizontalLine &h : chart.baselines) legend(h.label, h.color, " stroke-dasharray=\"2 3\"");

  svg += "</svg>\n";
  return svg;
}

} // namespace safeeval
