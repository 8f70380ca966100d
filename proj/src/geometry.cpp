#include "chartlib/geometry.hpp"

#include <algorithm>
#include <limits>

namespace chartlib {

namespace {

int orientation_sign(Vec2 a, Vec2 b, Vec2 c) {
  double v = (b - a).cross(c - a);
  double scale = std::max({std::abs(a.x), std::abs(a.y), std::abs(b.x),
                           std::abs(b.y), std::abs(c.x), std::abs(c.y), 1.0});
  double eps = 1e-12 * scale * scale;
  if (v > eps) return 1;
  if (v < -eps) return -1;
  return 0;
}

bool on_segment(Vec2 p, Vec2 a, Vec2 b) {
  return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
         std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12;
}

}  // namespace

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  int o1 = orientation_sign(a, b, c);
  int o2 = orientation_sign(a, b, d);
  int o3 = orientation_sign(c, d, a);
  int o4 = orientation_sign(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(c, a, b)) return true;
  if (o2 == 0 && on_segment(d, a, b)) return true;
  if (o3 == 0 && on_segment(a, c, d)) return true;
  if (o4 == 0 && on_segment(b, c, d)) return true;
  return false;
}

bool point_in_polygon(Vec2 p, std::span<const Vec2> poly) {
  const size_t n = poly.size();
  if (n < 3) return false;
  // Boundary points count as inside.
  for (size_t i = 0; i < n; ++i) {
    Vec2 a = poly[i], b = poly[(i + 1) % n];
    if (orientation_sign(a, b, p) == 0 && on_segment(p, a, b)) return true;
  }
  bool inside = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      double x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

bool polygon_is_simple(std::span<const Vec2> poly) {
  const size_t n = poly.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    Vec2 a = poly[i], b = poly[(i + 1) % n];
    if ((b - a).norm_sq() == 0.0) return false;
    for (size_t j = i + 1; j < n; ++j) {
      // Skip adjacent edges (share a vertex).
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      Vec2 c = poly[j], d = poly[(j + 1) % n];
      if (segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 ab = b - a;
  double len_sq = ab.norm_sq();
  if (len_sq == 0.0) return distance(p, a);
  double t = std::clamp((p - a).dot(ab) / len_sq, 0.0, 1.0);
  return distance(p, a + ab * t);
}

double distance_to_boundary(Vec2 p, std::span<const Vec2> poly) {
  double best = std::numeric_limits<double>::infinity();
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i)
    best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
  return best;
}

Vec2 inward_direction(Vec2 p, std::span<const Vec2> poly) {
  double best = std::numeric_limits<double>::infinity();
  Vec2 nearest{};
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    Vec2 a = poly[i], b = poly[(i + 1) % n];
    Vec2 ab = b - a;
    double len_sq = ab.norm_sq();
    double t = len_sq > 0.0 ? std::clamp((p - a).dot(ab) / len_sq, 0.0, 1.0) : 0.0;
    Vec2 q = a + ab * t;
    double d = distance(p, q);
    if (d < best) {
      best = d;
      nearest = q;
    }
  }
  Vec2 dir = p - nearest;
  double norm = dir.norm();
  return norm > 0.0 ? dir / norm : Vec2{};
}

double polygon_area(std::span<const Vec2> poly) {
  double twice = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) twice += poly[i].cross(poly[(i + 1) % n]);
  return std::abs(twice) * 0.5;
}

Bbox polygon_bbox(std::span<const Vec2> poly) {
  Bbox box{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()},
           {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
  for (Vec2 v : poly) {
    box.lo.x = std::min(box.lo.x, v.x);
    box.lo.y = std::min(box.lo.y, v.y);
    box.hi.x = std::max(box.hi.x, v.x);
    box.hi.y = std::max(box.hi.y, v.y);
  }
  return box;
}

bool segment_crosses_polygon(Vec2 a, Vec2 b, std::span<const Vec2> poly) {
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i)
    if (segments_intersect(a, b, poly[i], poly[(i + 1) % n])) return true;
  return false;
}

}  // namespace chartlib
