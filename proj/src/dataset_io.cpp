// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sess/scene_gen.hpp"

namespace sess {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "sess-forge-dataset/1";
constexpr std::array<const char*, 3> kSplitNames{"labeled", "unlabeled", "validation"};

std::string scene_filename(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%06lld.txt", static_cast<long long>(id));
  return buf;
}

void append_g9(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  out += buf;
}

// Strict token reader that knows where it is for error messages.
class LineReader {
 public:
  LineReader(const std::string& text, std::string origin) : in_(text), origin_(std::move(origin)) {}

  std::istringstream next_line(const char* expecting) {
    std::string line;
    if (!std::getline(in_, line))
      throw DatasetParseError(origin_, line_no_ + 1, std::string("unexpected end of file, expected ") + expecting);
    ++line_no_;
    return std::istringstream(line);
  }

  template <typename T>
  T field(std::istringstream& ls, const char* name) {
    T value{};
    if (!(ls >> value)) throw DatasetParseError(origin_, line_no_, std::string("bad or missing field '") + name + "'");
    return value;
  }

  // Values are written with float precision; reading them back through float
  // recovers the stored value exactly.
  double real(std::istringstream& ls, const char* name) {
    volatile float f = static_cast<float>(field<double>(ls, name));
    return static_cast<double>(f);
  }

  void expect_end(std::istringstream& ls) {
    std::string extra;
    if (ls >> extra) throw DatasetParseError(origin_, line_no_, "unexpected trailing token '" + extra + "'");
  }

  [[noreturn]] void fail(const std::string& what) const { throw DatasetParseError(origin_, line_no_, what); }

 private:
  std::istringstream in_;
  std::string origin_;
  std::size_t line_no_ = 0;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json spec_to_json(const SceneSpec& spec) {
  json classes = json::array();
  for (const auto& c : spec.classes)
    classes.push_back({{"name", c.name}, {"mean_size", c.mean_size}, {"spread", c.spread}});
  return {{"classes", classes},
          {"min_objects", spec.min_objects},
          {"max_objects", spec.max_objects},
          {"room_half_extent", spec.room_half_extent},
          {"min_points_per_object", spec.min_points_per_object},
          {"max_points_per_object", spec.max_points_per_object},
          {"clutter_points", spec.clutter_points},
          {"margin", spec.margin},
          {"random_heading", spec.random_heading},
          {"occlude_half", spec.occlude_half}};
}

}  // namespace

DatasetParseError::DatasetParseError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

std::string format_scene(const LabeledScene& scene) {
  std::string out = "scene " + std::to_string(scene.scene_id) + " " + std::to_string(scene.cloud.size()) + " " +
                    std::to_string(scene.boxes.size()) + "\n";
  out.reserve(out.size() + scene.cloud.size() * 40);
  for (const auto& p : scene.cloud.points) {
    append_g9(out, p[0]);
    out += ' ';
    append_g9(out, p[1]);
    out += ' ';
    append_g9(out, p[2]);
    out += '\n';
  }
  for (const auto& b : scene.boxes) {
    out += std::to_string(b.class_id);
    for (double v : {b.center[0], b.center[1], b.center[2], b.size[0], b.size[1], b.size[2], b.heading}) {
      out += ' ';
      append_g9(out, v);
    }
    out += '\n';
  }
  return out;
}

LabeledScene parse_scene(const std::string& text, const std::string& origin) {
  LineReader reader(text, origin);
  LabeledScene scene;

  auto header = reader.next_line("scene header");
  if (reader.field<std::string>(header, "tag") != "scene") reader.fail("header must start with 'scene'");
  scene.scene_id = reader.field<long long>(header, "scene_id");
  const auto n_points = reader.field<long long>(header, "n_points");
  const auto n_boxes = reader.field<long long>(header, "n_boxes");
  reader.expect_end(header);
  if (n_points < 1) reader.fail("n_points must be >= 1");
  if (n_boxes < 0) reader.fail("n_boxes must be >= 0");

  scene.cloud.points.reserve(static_cast<std::size_t>(n_points));
  for (long long i = 0; i < n_points; ++i) {
    auto ls = reader.next_line("point line");
    Vec3 p{reader.real(ls, "x"), reader.real(ls, "y"), reader.real(ls, "z")};
    reader.expect_end(ls);
    for (double v : p)
      if (!std::isfinite(v)) reader.fail("non-finite coordinate");
    scene.cloud.points.push_back(p);
  }
  for (long long i = 0; i < n_boxes; ++i) {
    auto ls = reader.next_line("box line");
    Box3D b;
    b.class_id = reader.field<int>(ls, "class");
    b.center = {reader.real(ls, "cx"), reader.real(ls, "cy"), reader.real(ls, "cz")};
    b.size = {reader.real(ls, "l"), reader.real(ls, "w"), reader.real(ls, "h")};
    b.heading = reader.real(ls, "theta");
    reader.expect_end(ls);
    if (!(b.size[0] > 0.0 && b.size[1] > 0.0 && b.size[2] > 0.0)) reader.fail("box size must be positive");
    scene.boxes.push_back(b);
  }
  return scene;
}

void save_dataset(const DatasetSplit& split, const fs::path& dir, const SceneSpec* spec) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  json manifest = {{"format", kFormatTag}, {"seed", split.seed}, {"class_count", split.class_count}};
  const std::array<const std::vector<LabeledScene>*, 3> pools{&split.labeled, &split.unlabeled, &split.validation};
  json members = json::object();
  for (std::size_t s = 0; s < pools.size(); ++s) {
    const fs::path sub = dir / kSplitNames[s];
    fs::create_directories(sub, ec);
    if (ec) throw std::runtime_error("cannot create " + sub.string() + ": " + ec.message());
    json ids = json::array();
    for (const auto& scene : *pools[s]) {
      const fs::path file = sub / scene_filename(scene.scene_id);
      std::ofstream out(file, std::ios::binary);
      out << format_scene(scene);
      if (!out) throw std::runtime_error("failed writing " + file.string());
      ids.push_back(scene.scene_id);
    }
    members[kSplitNames[s]] = ids;
  }
  manifest["splits"] = members;
  if (spec != nullptr) manifest["spec"] = spec_to_json(*spec);

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing manifest in " + dir.string());
}

DatasetSplit load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw DatasetParseError(manifest_path.string(), 0, e.what());
  }
  try {
    if (manifest.at("format").get<std::string>() != kFormatTag)
      throw DatasetParseError(manifest_path.string(), 0, "unsupported dataset format");
    DatasetSplit split;
    split.seed = manifest.at("seed").get<std::uint64_t>();
    split.class_count = manifest.at("class_count").get<int>();
    const std::array<std::vector<LabeledScene>*, 3> pools{&split.labeled, &split.unlabeled, &split.validation};
    for (std::size_t s = 0; s < pools.size(); ++s) {
      for (const auto& id : manifest.at("splits").at(kSplitNames[s])) {
        const auto scene_id = id.get<std::int64_t>();
        const fs::path file = dir / kSplitNames[s] / scene_filename(scene_id);
        LabeledScene scene = parse_scene(read_file(file), file.string());
        if (scene.scene_id != scene_id)
          throw DatasetParseError(file.string(), 1, "scene id does not match manifest");
        for (const auto& b : scene.boxes)
          if (b.class_id < 0 || b.class_id >= split.class_count)
            throw DatasetParseError(file.string(), 0, "box class outside [0, class_count)");
        pools[s]->push_back(std::move(scene));
      }
    }
    return split;
  } catch (const json::exception& e) {
    throw DatasetParseError(manifest_path.string(), 0, std::string("manifest: ") + e.what());
  }
}

}  // namespace sess
