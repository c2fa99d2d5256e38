// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/geometry.hpp"

#include <algorithm>
#include <tuple>

namespace coopcast {

std::atomic<std::uint64_t> g_heading_normalized_warnings{0};

namespace {

Vec2 checked_unit(Vec2 r) {
  double n = r.norm();
  double dev = std::fabs(n - 1.0);
  if (dev <= 1e-9) return r;
  if (dev <= 1e-3) {
    g_heading_normalized_warnings.fetch_add(1, std::memory_order_relaxed);
    return {r.x / n, r.y / n};
  }
  throw NumericError("rotate_into_frame: heading norm " + std::to_string(n) + " is not unit");
}

}  // namespace

Vec2 rotate_into_frame(Vec2 r, Vec2 v) {
  Vec2 u = checked_unit(r);
  return {u.x * v.x + u.y * v.y, -u.y * v.x + u.x * v.y};
}

Vec2 rotate_from_frame(Vec2 r, Vec2 v) {
  Vec2 u = checked_unit(r);
  return {u.x * v.x - u.y * v.y, u.y * v.x + u.x * v.y};
}

double heading_angle(Vec2 r) { return std::atan2(r.y, r.x); }

Vec2 heading_from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

std::array<Vec2, 4> Rect::corners() const {
  const Vec2 ex = {heading.x * half_extents.x, heading.y * half_extents.x};
  const Vec2 ey = {-heading.y * half_extents.y, heading.x * half_extents.y};
  return {center + ex + ey, center - ex + ey, center - ex - ey, center + ex - ey};
}

bool Rect::contains(Vec2 p) const {
  Vec2 local = rotate_into_frame(heading, p - center);
  return std::fabs(local.x) <= half_extents.x && std::fabs(local.y) <= half_extents.y;
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    s += p.cross(q);
  }
  return 0.5 * s;
}

std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& window) {
  std::vector<Vec2> poly = subject;
  for (std::size_t i = 0; i < window.size() && !poly.empty(); ++i) {
    const Vec2 a = window[i];
    const Vec2 b = window[(i + 1) % window.size()];
    const Vec2 edge = b - a;
    std::vector<Vec2> out;
    out.reserve(poly.size() + 2);
    for (std::size_t j = 0; j < poly.size(); ++j) {
      const Vec2 p = poly[j];
      const Vec2 q = poly[(j + 1) % poly.size()];
      const double sp = edge.cross(p - a);
      const double sq = edge.cross(q - a);
      // Collinear vertices (s == 0) are kept; they do not affect area.
      if (sp >= 0.0) out.push_back(p);
      if ((sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0)) {
        double t = sp / (sp - sq);
        out.push_back(p + (q - p) * t);
      }
    }
    poly = std::move(out);
  }
  return poly;
}

namespace {

std::tuple<double, double, double, double, double, double> rect_key(const Rect& r) {
  return {r.center.x, r.center.y, r.half_extents.x, r.half_extents.y, r.heading.x, r.heading.y};
}

double intersection_area(const Rect& a, const Rect& b) {
  auto ca = a.corners();
  auto cb = b.corners();
  std::vector<Vec2> clipped = clip_convex({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
  if (clipped.size() < 3) return 0.0;
  return std::max(0.0, polygon_area(clipped));
}

}  // namespace

double iou_bev(const Rect& a, const Rect& b) {
  if (!(a.half_extents.x > 0.0 && a.half_extents.y > 0.0 && b.half_extents.x > 0.0 &&
        b.half_extents.y > 0.0))
    throw NumericError("iou_bev: non-positive rectangle extents");
  const Rect& lo = rect_key(a) <= rect_key(b) ? a : b;
  const Rect& hi = rect_key(a) <= rect_key(b) ? b : a;
  double inter = intersection_area(lo, hi);
  double uni = lo.area() + hi.area() - inter;
  if (uni <= 0.0) return 0.0;
  double iou = inter / uni;
  return std::clamp(iou, 0.0, 1.0);
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 ab = b - a;
  double len2 = ab.dot(ab);
  if (len2 == 0.0) return (p - a).norm();
  double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

}  // namespace coopcast
