#include "jfpd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "jfpd/io.hpp"

namespace jfpd {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 64.0;
constexpr int kTicks = 5;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

void pad(double& lo, double& hi) {
  const double span = hi - lo;
  const double margin = span > 0.0 ? 0.05 * span : 0.5;
  lo -= margin;
  hi += margin;
}

}  // namespace

PlotRange padded_range(std::span<const Point> points) {
  if (points.empty()) throw std::invalid_argument("plot needs at least one point");
  PlotRange r{points[0].x, points[0].x, points[0].y, points[0].y};
  for (const Point& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument("plot point is not finite");
    }
    r.x_min = std::min(r.x_min, p.x);
    r.x_max = std::max(r.x_max, p.x);
    r.y_min = std::min(r.y_min, p.y);
    r.y_max = std::max(r.y_max, p.y);
  }
  pad(r.x_min, r.x_max);
  pad(r.y_min, r.y_max);
  return r;
}

std::string render_svg_scatter(std::span<const Point> points, const PlotAxes& axes, bool connect) {
  const PlotRange r = padded_range(points);
  const double plot_w = kWidth - 2 * kMargin;
  const double plot_h = kHeight - 2 * kMargin;
  auto sx = [&](double x) { return kMargin + (x - r.x_min) / (r.x_max - r.x_min) * plot_w; };
  auto sy = [&](double y) { return kHeight - kMargin - (y - r.y_min) / (r.y_max - r.y_min) * plot_h; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
       num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\"";
  s += " data-x-min=\"" + format_real(r.x_min) + "\" data-x-max=\"" + format_real(r.x_max) + "\"";
  s += " data-y-min=\"" + format_real(r.y_min) + "\" data-y-max=\"" + format_real(r.y_max) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"" + num(kMargin / 2) +
       "\" text-anchor=\"middle\" font-size=\"16\">" + escape(axes.title) + "</text>\n";

  const double x0 = kMargin;
  const double y0 = kHeight - kMargin;
  s += "<g stroke=\"black\" stroke-width=\"1\">\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(kWidth - kMargin) +
       "\" y2=\"" + num(y0) + "\"/>\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" +
       num(kMargin) + "\"/>\n";
  s += "</g>\n<g font-size=\"11\">\n";
  for (int i = 0; i <= kTicks; ++i) {
    const double t = static_cast<double>(i) / kTicks;
    const double xv = r.x_min + t * (r.x_max - r.x_min);
    const double yv = r.y_min + t * (r.y_max - r.y_min);
    s += "<text x=\"" + num(sx(xv)) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" +
         num(xv) + "</text>\n";
    s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(sy(yv) + 4) + "\" text-anchor=\"end\">" +
         num(yv) + "</text>\n";
  }
  s += "</g>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"" + num(kHeight - 16) +
       "\" text-anchor=\"middle\" font-size=\"13\">" + escape(axes.x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num(kHeight / 2) + "\" text-anchor=\"middle\" font-size=\"13\"" +
       " transform=\"rotate(-90 16 " + num(kHeight / 2) + ")\">" + escape(axes.y_label) +
       "</text>\n";

  if (connect && points.size() > 1) {
    s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (i) s += ' ';
      s += num(sx(points[i].x)) + "," + num(sy(points[i].y));
    }
    s += "\"/>\n";
  }
  s += "<g fill=\"steelblue\">\n";
  for (const Point& p : points) {
    s += "<circle cx=\"" + num(sx(p.x)) + "\" cy=\"" + num(sy(p.y)) + "\" r=\"4\"/>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

void emit_svg_scatter(std::span<const Point> points, const PlotAxes& axes,
                      const std::filesystem::path& path, bool connect) {
  write_file_atomic(path, render_svg_scatter(points, axes, connect));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace jfpd
