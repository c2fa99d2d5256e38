// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <vector>

#include "coopcast/errors.hpp"

namespace coopcast {

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2& o) const = default;
};

// Count of silently normalized almost-unit headings (|r|-1 within 1e-3);
// exposed so tests and the CLI can surface the warning.
extern std::atomic<std::uint64_t> g_heading_normalized_warnings;

// Rotates a world vector into the frame whose +x axis is the unit heading
// r = (c, s): out = (c*vx + s*vy, -s*vx + c*vy). rotate_into_frame(r, r)
// is (1, 0). Headings off unit length by more than 1e-3 raise NumericError,
// smaller deviations are normalized and counted as warnings.
Vec2 rotate_into_frame(Vec2 r, Vec2 v);

// Inverse of rotate_into_frame: maps a frame-local vector back to world.
Vec2 rotate_from_frame(Vec2 r, Vec2 v);

double heading_angle(Vec2 r);                  // atan2(s, c)
Vec2 heading_from_angle(double theta);

// Oriented BEV rectangle.
struct Rect {
  Vec2 center;
  Vec2 half_extents;  // (length/2, width/2), both > 0
  Vec2 heading;       // unit

  std::array<Vec2, 4> corners() const;  // CCW order
  double area() const { return 4.0 * half_extents.x * half_extents.y; }
  double diag() const { return 2.0 * half_extents.norm(); }
  bool contains(Vec2 p) const;
};

// Polygon area via the shoelace formula (CCW positive).
double polygon_area(const std::vector<Vec2>& poly);

// Sutherland-Hodgman clip of a convex polygon against a convex CCW window.
std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& window);

// Intersection-over-union of two oriented rectangles. Exactly symmetric:
// arguments are ordered canonically before clipping. Degenerate clips
// (< 3 vertices) count as zero intersection.
double iou_bev(const Rect& a, const Rect& b);

// Distance from a point to a segment.
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

}  // namespace coopcast
