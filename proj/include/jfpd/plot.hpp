#pragma once

#include <filesystem>
#include <span>
#include <string>

namespace jfpd {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct PlotAxes {
  std::string title;
  std::string x_label;
  std::string y_label;
};

/// Data extent widened by 5% of the span on each side (0.5 when flat).
struct PlotRange {
  double x_min, x_max, y_min, y_max;
};

PlotRange padded_range(std::span<const Point> points);

/// Standalone SVG with linear axes and one circle per point; `connect` also
/// draws a polyline through the points in order. Output bytes depend only on
/// the inputs.
std::string render_svg_scatter(std::span<const Point> points, const PlotAxes& axes,
                               bool connect = false);
void emit_svg_scatter(std::span<const Point> points, const PlotAxes& axes,
                      const std::filesystem::path& path, bool connect = false);

/// Pearson correlation; NaN when either side has zero variance or n < 2.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace jfpd
