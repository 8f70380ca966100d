#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace chartlib {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double norm_sq() const { return x * x + y * y; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

// Even-odd rule; points on the boundary count as inside.
bool point_in_polygon(Vec2 p, std::span<const Vec2> poly);

// Closed segment intersection test, including touching endpoints and
// collinear overlap.
bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d);

// True if no two non-adjacent edges intersect and no edge degenerates.
bool polygon_is_simple(std::span<const Vec2> poly);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

// Distance from an interior point to the closest polygon edge.
double distance_to_boundary(Vec2 p, std::span<const Vec2> poly);

// Direction from the nearest boundary point towards p (inward for interior
// points). Zero vector if p lies on the boundary.
Vec2 inward_direction(Vec2 p, std::span<const Vec2> poly);

double polygon_area(std::span<const Vec2> poly);

struct Bbox {
  Vec2 lo, hi;
};
Bbox polygon_bbox(std::span<const Vec2> poly);

// True if segment [a, b] crosses any edge of the polygon.
bool segment_crosses_polygon(Vec2 a, Vec2 b, std::span<const Vec2> poly);

}  // namespace chartlib
