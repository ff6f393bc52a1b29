// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/geometry.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace sess {

namespace {

constexpr double kAreaEpsilon = 1e-12;

// Signed distance-like test: > 0 when p is left of the directed edge a->b.
double edge_side(const std::array<double, 2>& a, const std::array<double, 2>& b,
                 const std::array<double, 2>& p) {
  return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
}

std::array<double, 2> segment_cross(const std::array<double, 2>& p, const std::array<double, 2>& q,
                                    double side_p, double side_q) {
  const double t = side_p / (side_p - side_q);
  return {p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
}

}  // namespace

double normalize_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(theta + std::numbers::pi, two_pi);
  if (wrapped < 0.0) wrapped += two_pi;
  wrapped -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (wrapped >= std::numbers::pi) wrapped -= two_pi;
  return wrapped;
}

void validate_box(const Box3D& box, int class_count) {
  for (int k = 0; k < 3; ++k) {
    if (!std::isfinite(box.center[k]) || !std::isfinite(box.size[k]))
      throw std::invalid_argument("box has non-finite center or size");
    if (box.size[k] <= 0.0) throw std::invalid_argument("box size must be positive");
  }
  if (!std::isfinite(box.heading)) throw std::invalid_argument("box heading is not finite");
  if (box.class_id < 0 || box.class_id >= class_count)
    throw std::invalid_argument("box class_id " + std::to_string(box.class_id) + " outside [0, " +
                                std::to_string(class_count) + ")");
}

std::array<Vec3, 8> box_corners(const Box3D& box) {
  const double hl = 0.5 * box.size[0];
  const double hw = 0.5 * box.size[1];
  const double hh = 0.5 * box.size[2];
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  constexpr std::array<std::array<double, 2>, 4> pattern{{{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};

  std::array<Vec3, 8> out{};
  for (int face = 0; face < 2; ++face) {
    const double z = face == 0 ? -hh : hh;
    for (int i = 0; i < 4; ++i) {
      const double lx = pattern[i][0] * hl;
      const double ly = pattern[i][1] * hw;
      out[face * 4 + i] = {box.center[0] + c * lx - s * ly, box.center[1] + s * lx + c * ly,
                           box.center[2] + z};
    }
  }
  return out;
}

double box_volume(const Box3D& box) { return box.size[0] * box.size[1] * box.size[2]; }

bool box_contains(const Box3D& box, const Vec3& p, double margin) {
  const Vec3 d = p - box.center;
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  const double lx = c * d[0] + s * d[1];
  const double ly = -s * d[0] + c * d[1];
  return std::abs(lx) <= 0.5 * box.size[0] + margin && std::abs(ly) <= 0.5 * box.size[1] + margin &&
         std::abs(d[2]) <= 0.5 * box.size[2] + margin;
}

Polygon2 box_footprint(const Box3D& box) {
  const auto corners = box_corners(box);
  Polygon2 poly(4);
  for (int i = 0; i < 4; ++i) poly[i] = {corners[i][0], corners[i][1]};
  return poly;
}

double polygon_area(const Polygon2& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    twice += a[0] * b[1] - b[0] * a[1];
  }
  return 0.5 * twice;
}

Polygon2 clip_convex(const Polygon2& subject, const Polygon2& clip) {
  Polygon2 output = subject;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const auto& a = clip[e];
    const auto& b = clip[(e + 1) % m];
    Polygon2 input;
    input.swap(output);
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& cur = input[i];
      const auto& prev = input[(i + n - 1) % n];
      const double side_cur = edge_side(a, b, cur);
      const double side_prev = edge_side(a, b, prev);
      if (side_cur >= 0.0) {
        if (side_prev < 0.0) output.push_back(segment_cross(prev, cur, side_prev, side_cur));
        output.push_back(cur);
      } else if (side_prev >= 0.0) {
        output.push_back(segment_cross(prev, cur, side_prev, side_cur));
      }
    }
  }
  return output;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const double area = polygon_area(clip_convex(box_footprint(a), box_footprint(b)));
  return area < kAreaEpsilon ? 0.0 : area;
}

double intersection_volume(const Box3D& a, const Box3D& b) {
  const double z_lo = std::max(a.center[2] - 0.5 * a.size[2], b.center[2] - 0.5 * b.size[2]);
  const double z_hi = std::min(a.center[2] + 0.5 * a.size[2], b.center[2] + 0.5 * b.size[2]);
  if (z_hi <= z_lo) return 0.0;
  // Quick reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(a.size[0], a.size[1]);
  const double rb = 0.5 * std::hypot(b.size[0], b.size[1]);
  if (std::hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) >= ra + rb) return 0.0;
  return bev_intersection_area(a, b) * (z_hi - z_lo);
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double inter = intersection_volume(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = box_volume(a) + box_volume(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace sess
