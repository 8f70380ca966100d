#include "chartlib/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace chartlib {

namespace {

struct Range {
  double lo, hi;
  double span() const { return hi - lo; }
};

Range axis_range(std::span<const Vec2> pts, bool y) {
  double lo = 1e300, hi = -1e300;
  for (Vec2 p : pts) {
    double v = y ? p.y : p.x;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

double nice_tick(double span) {
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step = 10.0;
  if (norm <= 1.0) step = 1.0;
  else if (norm <= 2.0) step = 2.0;
  else if (norm <= 5.0) step = 5.0;
  return step * mag;
}

void appendf(std::string& out, const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  out += buf;
}

}  // namespace

std::string render_svg(std::span<const Vec2> points,
                       std::span<const Vec2> color_ref,
                       const RenderOptions& options) {
  if (points.empty()) throw std::invalid_argument("render_svg: no points");
  if (color_ref.size() != points.size())
    throw std::invalid_argument("render_svg: color reference size mismatch");

  const double W = options.size_px;
  const double H = options.size_px;
  const double ml = 58.0, mr = 16.0, mt = 16.0, mb = 44.0;  // margins
  const Range rx = axis_range(points, false);
  const Range ry = axis_range(points, true);
  const Range cx = axis_range(color_ref, false);
  const Range cy = axis_range(color_ref, true);

  auto px = [&](double x) { return ml + (x - rx.lo) / rx.span() * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ry.lo) / ry.span() * (H - mt - mb); };

  std::string svg;
  svg.reserve(points.size() * 64 + 2048);
  appendf(svg,
          "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
          "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
          "viewBox=\"0 0 %.0f %.0f\">\n",
          W, H, W, H);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  appendf(svg,
          "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
          "fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
          ml, mt, W - ml - mr, H - mt - mb);

  // Ticks and labels, meters on both axes.
  const double tick_x = nice_tick(rx.span());
  for (double v = std::ceil(rx.lo / tick_x) * tick_x; v <= rx.hi + 1e-9; v += tick_x) {
    appendf(svg,
            "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
            "stroke=\"#444444\" stroke-width=\"1\"/>\n",
            px(v), H - mb, px(v), H - mb + 5.0);
    appendf(svg,
            "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\" "
            "fill=\"#222222\">%.4g</text>\n",
            px(v), H - mb + 18.0, v);
  }
  const double tick_y = nice_tick(ry.span());
  for (double v = std::ceil(ry.lo / tick_y) * tick_y; v <= ry.hi + 1e-9; v += tick_y) {
    appendf(svg,
            "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
            "stroke=\"#444444\" stroke-width=\"1\"/>\n",
            ml - 5.0, py(v), ml, py(v));
    appendf(svg,
            "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"end\" "
            "fill=\"#222222\">%.4g</text>\n",
            ml - 8.0, py(v) + 4.0, v);
  }
  appendf(svg,
          "<text x=\"%.1f\" y=\"%.1f\" font-size=\"13\" text-anchor=\"middle\" "
          "fill=\"#222222\">x1 [m]</text>\n",
          ml + 0.5 * (W - ml - mr), H - 8.0);
  appendf(svg,
          "<text x=\"14\" y=\"%.1f\" font-size=\"13\" text-anchor=\"middle\" "
          "fill=\"#222222\" transform=\"rotate(-90 14 %.1f)\">x2 [m]</text>\n",
          mt + 0.5 * (H - mt - mb), mt + 0.5 * (H - mt - mb));

  for (size_t l = 0; l < points.size(); ++l) {
    // Fixed 2D colormap over the reference position.
    const double u = (color_ref[l].x - cx.lo) / cx.span();
    const double v = (color_ref[l].y - cy.lo) / cy.span();
    const int r = static_cast<int>(std::lround(30.0 + 215.0 * u));
    const int g = static_cast<int>(std::lround(30.0 + 215.0 * v));
    const int b = static_cast<int>(std::lround(235.0 - 100.0 * u - 90.0 * v));
    appendf(svg, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"#%02x%02x%02x\"/>\n",
            px(points[l].x), py(points[l].y), options.point_radius, r, g, b);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace chartlib
