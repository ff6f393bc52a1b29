// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sess/detector.hpp"
#include "sess/geometry.hpp"
#include "sess/random.hpp"

namespace sess::testing {

inline PointCloud random_cloud(Rng& rng, std::size_t n, double extent = 2.0, double height = 1.0) {
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i)
    pc.points.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(0.0, height)});
  return pc;
}

inline Box3D random_box(Rng& rng, int class_count, double extent = 1.0, bool rotated = true) {
  Box3D b;
  b.class_id = static_cast<int>(rng.index(static_cast<std::size_t>(class_count)));
  b.center = {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-0.5, 0.5)};
  b.size = {rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5)};
  b.heading = rotated ? normalize_angle(rng.uniform(-3.2, 3.2)) : 0.0;
  return b;
}

/// |a - n| / max(|a|, |n|, floor): relative error with an absolute floor so
/// that entries which are zero up to rounding do not divide by ~0.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central finite difference of `loss` with respect to every entry of `params`.
inline std::vector<double> numeric_gradient(ParamVector params, const std::function<double(const ParamVector&)>& loss,
                                            double step = 1e-4) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params.values[i];
    params.values[i] = keep + step;
    const double up = loss(params);
    params.values[i] = keep - step;
    const double down = loss(params);
    params.values[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  return worst;
}

}  // namespace sess::testing
