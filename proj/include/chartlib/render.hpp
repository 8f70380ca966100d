#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "chartlib/geometry.hpp"

namespace chartlib {

struct RenderOptions {
  double point_radius = 3.0;
  uint32_t size_px = 800;
  bool colorize_by_position = true;
};

// Scatter plot of chart points with axes in meters. Each point is filled
// from a fixed 2D colormap over `color_ref` (normally the ground-truth
// positions), so charting errors show up as color discontinuities. Output
// bytes are deterministic.
std::string render_svg(std::span<const Vec2> points,
                       std::span<const Vec2> color_ref,
                       const RenderOptions& options);

}  // namespace chartlib
