// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sess/geometry.hpp"
#include "sess/random.hpp"

namespace sess {

/// Canonical extent of one object class; each instance draws every
/// dimension uniformly from mean * [1 - spread, 1 + spread].
struct ClassShape {
  std::string name;
  Vec3 mean_size{1.0, 1.0, 1.0};
  double spread = 0.1;
};

struct SceneSpec {
  std::vector<ClassShape> classes;
  int min_objects = 2;
  int max_objects = 4;
  /// Objects and floor clutter live in [-room_half_extent, room_half_extent]^2.
  double room_half_extent = 2.0;
  int min_points_per_object = 320;
  int max_points_per_object = 448;
  int clutter_points = 896;
  /// Minimum BEV gap between any two object footprints.
  double margin = 0.1;
  bool random_heading = false;
  /// Keep only the half of each object surface with non-negative local x.
  bool occlude_half = false;

  int class_count() const { return static_cast<int>(classes.size()); }
  void validate() const;

  /// Four furniture-like classes sized for a 4 m x 4 m room.
  static SceneSpec desk_default();
};

struct LabeledScene {
  std::int64_t scene_id = 0;
  PointCloud cloud;
  std::vector<Box3D> boxes;

  bool operator==(const LabeledScene&) const = default;
};

/// Labeled / unlabeled / validation pools. Unlabeled scenes keep their boxes
/// so transductive evaluation can score them; training never reads them.
struct DatasetSplit {
  int class_count = 0;
  std::uint64_t seed = 0;
  std::vector<LabeledScene> labeled;
  std::vector<LabeledScene> unlabeled;
  std::vector<LabeledScene> validation;

  bool operator==(const DatasetSplit&) const = default;
};

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection-samples non-overlapping objects, samples points on their
/// visible surfaces and on the floor, and shuffles the result.
/// Throws PlacementError after 1000 rejected placements.
LabeledScene generate_scene(const SceneSpec& spec, Rng& rng, std::int64_t scene_id = 0);

/// Scenes [first_id, first_id + count), each from its own stream keyed by id.
std::vector<LabeledScene> generate_scenes(const SceneSpec& spec, std::uint64_t seed, std::int64_t first_id,
                                          std::size_t count);

/// Minimum distance between two box footprints (0 when they overlap).
double footprint_distance(const Box3D& a, const Box3D& b);

/// Labeled count for a pool of `n` scenes at the given ratio (ceil).
std::size_t labeled_count(std::size_t n, double ratio);

/// Draws ceil(ratio * N) labeled scenes, redrawing until every class
/// appears; the rest become unlabeled. Both lists are sorted by scene_id.
DatasetSplit split_dataset(const std::vector<LabeledScene>& scenes, double labeled_ratio, int class_count,
                           Rng& rng);

std::vector<int> class_histogram(const std::vector<LabeledScene>& scenes, int class_count);

// ---- on-disk format ----

class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(const std::string& file, std::size_t line, const std::string& what);
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

std::string format_scene(const LabeledScene& scene);
LabeledScene parse_scene(const std::string& text, const std::string& origin = "<memory>");

/// Writes labeled/, unlabeled/, validation/ directories of scene records and a
/// manifest.json with split membership, seed, class count and, when given,
/// the generating spec.
void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir, const SceneSpec* spec = nullptr);
DatasetSplit load_dataset(const std::filesystem::path& dir);

}  // namespace sess
