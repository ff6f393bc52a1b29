// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/scene_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sess {

namespace {

constexpr int kMaxPlacementRejections = 1000;
constexpr int kMaxCoverageRedraws = 10000;

// Generated values are kept at float precision so that the 9-digit text
// format reproduces them bit-exactly.
// The volatile store stops the vectorizer from folding the round trip away.
double quantize(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}
Vec3 quantize(const Vec3& v) { return {quantize(v[0]), quantize(v[1]), quantize(v[2])}; }

double point_segment_distance(const std::array<double, 2>& p, const std::array<double, 2>& a,
                              const std::array<double, 2>& b) {
  const double dx = b[0] - a[0];
  const double dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p[0] - (a[0] + t * dx), p[1] - (a[1] + t * dy));
}

Vec3 sample_surface_point(const Box3D& box, Rng& rng) {
  const double l = box.size[0], w = box.size[1], h = box.size[2];
  // Top, +x, -x, +y, -y. The bottom face rests on the floor and is never seen.
  const std::array<double, 5> area{l * w, w * h, w * h, l * h, l * h};
  const double total = std::accumulate(area.begin(), area.end(), 0.0);
  double pick = rng.uniform() * total;
  int face = 0;
  while (face < 4 && pick >= area[face]) pick -= area[face++];

  const double u = rng.uniform() - 0.5;
  const double v = rng.uniform() - 0.5;
  Vec3 local{};
  switch (face) {
    case 0: local = {u * l, v * w, 0.5 * h}; break;
    case 1: local = {0.5 * l, u * w, v * h}; break;
    case 2: local = {-0.5 * l, u * w, v * h}; break;
    case 3: local = {u * l, 0.5 * w, v * h}; break;
    default: local = {u * l, -0.5 * w, v * h}; break;
  }
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  return {box.center[0] + c * local[0] - s * local[1], box.center[1] + s * local[0] + c * local[1],
          box.center[2] + local[2]};
}

bool in_local_positive_half(const Box3D& box, const Vec3& p) {
  const Vec3 d = p - box.center;
  return std::cos(box.heading) * d[0] + std::sin(box.heading) * d[1] >= 0.0;
}

}  // namespace

void SceneSpec::validate() const {
  if (class_count() < 2) throw std::invalid_argument("scene spec needs at least 2 classes");
  if (min_objects < 1 || max_objects < min_objects)
    throw std::invalid_argument("objects_per_scene must satisfy 1 <= min <= max");
  if (!(room_half_extent > 0.0)) throw std::invalid_argument("room extent must be positive");
  if (min_points_per_object < 8 || max_points_per_object < min_points_per_object)
    throw std::invalid_argument("points per object must satisfy 8 <= min <= max");
  if (clutter_points < 0) throw std::invalid_argument("clutter_points must be >= 0");
  if (margin < 0.0) throw std::invalid_argument("margin must be >= 0");
  for (const auto& c : classes) {
    for (double d : c.mean_size)
      if (!(d > 0.0)) throw std::invalid_argument("class '" + c.name + "' has non-positive extent");
    if (!(c.spread >= 0.0 && c.spread < 1.0))
      throw std::invalid_argument("class '" + c.name + "' spread must lie in [0, 1)");
  }
}

SceneSpec SceneSpec::desk_default() {
  SceneSpec spec;
  spec.classes = {
      {"table", {1.2, 0.8, 0.75}, 0.1},
      {"chair", {0.5, 0.5, 0.9}, 0.1},
      {"cabinet", {0.8, 0.45, 1.4}, 0.1},
      {"sofa", {1.6, 0.8, 0.6}, 0.1},
  };
  return spec;
}

double footprint_distance(const Box3D& a, const Box3D& b) {
  const Polygon2 pa = box_footprint(a);
  const Polygon2 pb = box_footprint(b);
  if (polygon_area(clip_convex(pa, pb)) > 0.0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < 2; ++pass) {
    const Polygon2& verts = pass == 0 ? pa : pb;
    const Polygon2& edges = pass == 0 ? pb : pa;
    for (const auto& v : verts)
      for (std::size_t e = 0; e < edges.size(); ++e)
        best = std::min(best, point_segment_distance(v, edges[e], edges[(e + 1) % edges.size()]));
  }
  return best;
}

LabeledScene generate_scene(const SceneSpec& spec, Rng& rng, std::int64_t scene_id) {
  spec.validate();
  LabeledScene scene;
  scene.scene_id = scene_id;

  const int object_count = rng.integer(spec.min_objects, spec.max_objects);
  int rejections = 0;
  while (static_cast<int>(scene.boxes.size()) < object_count) {
    Box3D box;
    box.class_id = rng.integer(0, spec.class_count() - 1);
    const ClassShape& shape = spec.classes[box.class_id];
    for (int k = 0; k < 3; ++k)
      box.size[k] = quantize(shape.mean_size[k] * rng.uniform(1.0 - shape.spread, 1.0 + shape.spread));
    if (spec.random_heading) {
      box.heading = quantize(normalize_angle(rng.uniform(-std::numbers::pi, std::numbers::pi)));
      if (box.heading >= std::numbers::pi || box.heading < -std::numbers::pi)
        box.heading = std::nextafter(static_cast<float>(std::numbers::pi), 0.0f);
    }
    const double reach = 0.5 * std::hypot(box.size[0], box.size[1]);
    const double span = std::max(0.0, spec.room_half_extent - reach);
    box.center = quantize(Vec3{rng.uniform(-span, span), rng.uniform(-span, span), 0.5 * box.size[2]});

    const bool clear = std::all_of(scene.boxes.begin(), scene.boxes.end(), [&](const Box3D& other) {
      return footprint_distance(box, other) >= spec.margin;
    });
    if (clear) {
      scene.boxes.push_back(box);
    } else if (++rejections >= kMaxPlacementRejections) {
      throw PlacementError("scene " + std::to_string(scene_id) + ": could not place " +
                           std::to_string(object_count) + " objects after " +
                           std::to_string(kMaxPlacementRejections) + " rejections");
    }
  }

  for (const auto& box : scene.boxes) {
    const int count = rng.integer(spec.min_points_per_object, spec.max_points_per_object);
    for (int i = 0; i < count;) {
      const Vec3 p = sample_surface_point(box, rng);
      if (spec.occlude_half && !in_local_positive_half(box, p)) continue;
      scene.cloud.points.push_back(quantize(p));
      ++i;
    }
  }
  for (int i = 0; i < spec.clutter_points;) {
    const Vec3 p{rng.uniform(-spec.room_half_extent, spec.room_half_extent),
                 rng.uniform(-spec.room_half_extent, spec.room_half_extent), 0.0};
    const bool hidden = std::any_of(scene.boxes.begin(), scene.boxes.end(),
                                    [&](const Box3D& b) { return box_contains(b, p); });
    if (hidden) continue;
    scene.cloud.points.push_back(quantize(p));
    ++i;
  }

  auto& pts = scene.cloud.points;
  for (std::size_t i = pts.size(); i > 1; --i) std::swap(pts[i - 1], pts[rng.index(i)]);
  return scene;
}

std::vector<LabeledScene> generate_scenes(const SceneSpec& spec, std::uint64_t seed, std::int64_t first_id,
                                          std::size_t count) {
  std::vector<LabeledScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::int64_t id = first_id + static_cast<std::int64_t>(i);
    Rng rng = Rng::derive(seed, {0x5ce7e, static_cast<std::uint64_t>(id)});
    out.push_back(generate_scene(spec, rng, id));
  }
  return out;
}

std::size_t labeled_count(std::size_t n, double ratio) {
  const double exact = ratio * static_cast<double>(n);
  auto count = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(count, 1, n);
}

std::vector<int> class_histogram(const std::vector<LabeledScene>& scenes, int class_count) {
  std::vector<int> hist(static_cast<std::size_t>(class_count), 0);
  for (const auto& s : scenes)
    for (const auto& b : s.boxes)
      if (b.class_id >= 0 && b.class_id < class_count) ++hist[b.class_id];
  return hist;
}

DatasetSplit split_dataset(const std::vector<LabeledScene>& scenes, double labeled_ratio, int class_count,
                           Rng& rng) {
  if (!(labeled_ratio > 0.0 && labeled_ratio <= 1.0))
    throw std::invalid_argument("labeled_ratio must lie in (0, 1]");
  if (scenes.empty()) throw std::invalid_argument("split_dataset: no scenes");
  const std::size_t n = scenes.size();
  const std::size_t n_labeled = labeled_count(n, labeled_ratio);

  std::vector<std::size_t> order(n);
  for (int attempt = 0; attempt < kMaxCoverageRedraws; ++attempt) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < n_labeled; ++i) std::swap(order[i], order[i + rng.index(n - i)]);

    std::vector<bool> seen(static_cast<std::size_t>(class_count), false);
    for (std::size_t i = 0; i < n_labeled; ++i)
      for (const auto& b : scenes[order[i]].boxes)
        if (b.class_id >= 0 && b.class_id < class_count) seen[b.class_id] = true;
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) continue;

    std::vector<bool> is_labeled(n, false);
    for (std::size_t i = 0; i < n_labeled; ++i) is_labeled[order[i]] = true;
    DatasetSplit split;
    split.class_count = class_count;
    for (std::size_t i = 0; i < n; ++i) (is_labeled[i] ? split.labeled : split.unlabeled).push_back(scenes[i]);
    auto by_id = [](const LabeledScene& a, const LabeledScene& b) { return a.scene_id < b.scene_id; };
    std::sort(split.labeled.begin(), split.labeled.end(), by_id);
    std::sort(split.unlabeled.begin(), split.unlabeled.end(), by_id);
    return split;
  }
  throw CoverageError("no labeled draw covering all " + std::to_string(class_count) + " classes after " +
                      std::to_string(kMaxCoverageRedraws) + " attempts");
}

}  // namespace sess
