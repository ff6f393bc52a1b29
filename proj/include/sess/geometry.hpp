// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace sess {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double squared_norm(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

/// A scene as an unordered set of 3D points (meters, z up).
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Vec3& operator[](std::size_t i) const { return points[i]; }

  bool operator==(const PointCloud&) const = default;
};

/// Oriented box with heading about the upright axis. `size` is (l, w, h)
/// measured in the box frame; l runs along the heading direction.
struct Box3D {
  int class_id = 0;
  Vec3 center{0.0, 0.0, 0.0};
  Vec3 size{1.0, 1.0, 1.0};
  double heading = 0.0;

  bool operator==(const Box3D&) const = default;
};

/// Wraps an angle into [-pi, pi).
double normalize_angle(double theta);

/// Throws std::invalid_argument when sizes are non-positive, any field is
/// non-finite, or class_id is outside [0, class_count).
void validate_box(const Box3D& box, int class_count);

/// Bottom face counter-clockwise (seen from +z) starting at local (+l/2, +w/2),
/// then the top face in the same order.
std::array<Vec3, 8> box_corners(const Box3D& box);

double box_volume(const Box3D& box);

/// True when `p` lies inside the box grown by `margin` on every side.
bool box_contains(const Box3D& box, const Vec3& p, double margin = 0.0);

using Polygon2 = std::vector<std::array<double, 2>>;

/// Bird's-eye-view footprint of the box, counter-clockwise.
Polygon2 box_footprint(const Box3D& box);

/// Signed shoelace area; positive for counter-clockwise polygons.
double polygon_area(const Polygon2& poly);

/// Sutherland-Hodgman clip of `subject` against the convex CCW polygon `clip`.
Polygon2 clip_convex(const Polygon2& subject, const Polygon2& clip);

/// Exact BEV intersection area of two oriented footprints.
double bev_intersection_area(const Box3D& a, const Box3D& b);

double intersection_volume(const Box3D& a, const Box3D& b);

/// Heading-aware 3D intersection-over-union.
double iou3d(const Box3D& a, const Box3D& b);

}  // namespace sess
