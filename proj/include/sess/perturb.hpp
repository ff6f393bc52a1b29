// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <numbers>
#include <string_view>

#include "sess/geometry.hpp"
#include "sess/proposals.hpp"
#include "sess/random.hpp"

namespace sess {

/// One draw of the stochastic transform {flip-x, flip-y, rotation, scale}.
/// Applied as flip -> rotate about z -> uniform scale, pivoting on the origin.
struct TransformSample {
  bool flip_x = false;
  bool flip_y = false;
  double rotation = 0.0;
  double scale = 1.0;

  static TransformSample identity() { return {}; }
  bool operator==(const TransformSample&) const = default;
};

struct PerturbConfig {
  std::size_t subsample_count = 1024;
  double rotation_bound = std::numbers::pi / 6.0;  // 30 degrees
  double scale_min = 0.85;
  double scale_max = 1.15;

  bool enable_flip_x = true;
  bool enable_flip_y = true;
  bool enable_rotation = true;
  bool enable_scaling = true;
  /// When false the teacher sees the same sub-sample as the student.
  bool independent_subsamples = true;

  void validate() const;
  /// Disables one perturbation by its CLI name (flip-x, flip-y, rotation,
  /// scaling, subsample-independence). Throws on unknown names.
  void disable(std::string_view name);
  void disable_all();

  bool operator==(const PerturbConfig&) const = default;
};

/// Flip decision from a uniform draw: true iff eps > 0.5.
inline bool flip_from_uniform(double eps) { return eps > 0.5; }

/// Draws flip-x, flip-y, rotation, scale in that order. Disabled components
/// still consume their draw so toggling one leaves the others unchanged.
TransformSample sample_transform(const PerturbConfig& config, Rng& rng);

/// Uniform sub-sample of `count` points: without replacement when
/// count <= n, with replacement otherwise. Throws on count == 0 or empty input.
PointCloud random_subsample(const PointCloud& cloud, std::size_t count, Rng& rng);

Vec3 transform_point(const TransformSample& t, const Vec3& p);
Vec3 inverse_transform_point(const TransformSample& t, const Vec3& p);
PointCloud transform_points(const TransformSample& t, const PointCloud& cloud);
PointCloud inverse_transform_points(const TransformSample& t, const PointCloud& cloud);

double transform_heading(const TransformSample& t, double heading);
Box3D transform_box(const TransformSample& t, const Box3D& box);

/// Geometry only: centers, sizes (and log-sizes), headings. Class
/// probabilities and objectness are carried over untouched.
ProposalSet transform_proposals(const TransformSample& t, const ProposalSet& props);

}  // namespace sess
