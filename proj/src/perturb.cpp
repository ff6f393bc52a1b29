// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/perturb.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sess {

void PerturbConfig::validate() const {
  if (subsample_count < 1) throw std::invalid_argument("subsample_count must be >= 1");
  if (!(rotation_bound >= 0.0 && rotation_bound <= std::numbers::pi))
    throw std::invalid_argument("rotation_bound must lie in [0, pi]");
  if (!(scale_min > 0.0 && scale_min <= scale_max))
    throw std::invalid_argument("scale range must satisfy 0 < scale_min <= scale_max");
}

void PerturbConfig::disable(std::string_view name) {
  if (name == "flip-x") {
    enable_flip_x = false;
  } else if (name == "flip-y") {
    enable_flip_y = false;
  } else if (name == "rotation") {
    enable_rotation = false;
  } else if (name == "scaling") {
    enable_scaling = false;
  } else if (name == "subsample-independence") {
    independent_subsamples = false;
  } else {
    throw std::invalid_argument("unknown perturbation '" + std::string(name) + "'");
  }
}

void PerturbConfig::disable_all() {
  enable_flip_x = enable_flip_y = enable_rotation = enable_scaling = false;
  independent_subsamples = false;
}

TransformSample sample_transform(const PerturbConfig& config, Rng& rng) {
  const double eps_x = rng.uniform();
  const double eps_y = rng.uniform();
  const double omega = rng.uniform(-config.rotation_bound, config.rotation_bound);
  const double s = rng.uniform(config.scale_min, config.scale_max);

  TransformSample t;
  t.flip_x = config.enable_flip_x && flip_from_uniform(eps_x);
  t.flip_y = config.enable_flip_y && flip_from_uniform(eps_y);
  t.rotation = config.enable_rotation ? omega : 0.0;
  t.scale = config.enable_scaling ? s : 1.0;
  return t;
}

PointCloud random_subsample(const PointCloud& cloud, std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("random_subsample: count must be >= 1");
  if (cloud.empty()) throw std::invalid_argument("random_subsample: empty point cloud");
  const std::size_t n = cloud.size();
  PointCloud out;
  out.points.reserve(count);
  if (count <= n) {
    // Partial Fisher-Yates over an index permutation.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + rng.index(n - i);
      std::swap(idx[i], idx[j]);
      out.points.push_back(cloud.points[idx[i]]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) out.points.push_back(cloud.points[rng.index(n)]);
  }
  return out;
}

namespace {

Vec3 rotate_z(const Vec3& p, double omega) {
  if (omega == 0.0) return p;
  const double c = std::cos(omega);
  const double s = std::sin(omega);
  return {c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]};
}

Vec3 scaled(const Vec3& p, double s) {
  if (s == 1.0) return p;
  return {s * p[0], s * p[1], s * p[2]};
}

}  // namespace

Vec3 transform_point(const TransformSample& t, const Vec3& p) {
  Vec3 q = p;
  if (t.flip_x) q[0] = -q[0];
  if (t.flip_y) q[1] = -q[1];
  return scaled(rotate_z(q, t.rotation), t.scale);
}

Vec3 inverse_transform_point(const TransformSample& t, const Vec3& p) {
  Vec3 q = rotate_z(scaled(p, 1.0 / t.scale), -t.rotation);
  if (t.flip_y) q[1] = -q[1];
  if (t.flip_x) q[0] = -q[0];
  return q;
}

PointCloud transform_points(const TransformSample& t, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(transform_point(t, p));
  return out;
}

PointCloud inverse_transform_points(const TransformSample& t, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(inverse_transform_point(t, p));
  return out;
}

double transform_heading(const TransformSample& t, double heading) {
  if (t == TransformSample::identity()) return heading;
  double h = heading;
  if (t.flip_x) h = std::numbers::pi - h;
  if (t.flip_y) h = -h;
  h += t.rotation;
  return normalize_angle(h);
}

Box3D transform_box(const TransformSample& t, const Box3D& box) {
  Box3D out = box;
  out.center = transform_point(t, box.center);
  out.size = scaled(box.size, t.scale);
  out.heading = transform_heading(t, box.heading);
  return out;
}

ProposalSet transform_proposals(const TransformSample& t, const ProposalSet& props) {
  ProposalSet out = props;
  const double log_scale = std::log(t.scale);
  for (auto& p : out.proposals) {
    p.center = transform_point(t, p.center);
    p.seed_xyz = transform_point(t, p.seed_xyz);
    p.size = scaled(p.size, t.scale);
    if (t.scale != 1.0)
      for (double& l : p.log_size) l += log_scale;
    p.heading = transform_heading(t, p.heading);
  }
  return out;
}

}  // namespace sess
