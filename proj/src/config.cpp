// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <type_traits>
#include <variant>

namespace sess {

namespace {

using Json = nlohmann::json;

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields are stored through uint64_t references");

using Ref = std::variant<int*, std::uint64_t*, double*, bool*, std::string*, std::vector<double>*,
                         std::vector<std::uint64_t>*, std::vector<std::string>*, TrainMode*, std::vector<ClassShape>*>;

struct Field {
  const char* key;
  std::function<Ref(ExperimentConfig&)> ref;
};

#define SESS_FIELD(key, member) \
  Field { key, [](ExperimentConfig& c) -> Ref { return &c.member; } }

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = {
      SESS_FIELD("data.dir", data_dir),
      SESS_FIELD("data.train_scenes", train_scenes),
      SESS_FIELD("data.val_scenes", val_scenes),
      SESS_FIELD("data.seed", data_seed),

      SESS_FIELD("scene.classes", scene.classes),
      SESS_FIELD("scene.min_objects", scene.min_objects),
      SESS_FIELD("scene.max_objects", scene.max_objects),
      SESS_FIELD("scene.room_half_extent", scene.room_half_extent),
      SESS_FIELD("scene.min_points_per_object", scene.min_points_per_object),
      SESS_FIELD("scene.max_points_per_object", scene.max_points_per_object),
      SESS_FIELD("scene.clutter_points", scene.clutter_points),
      SESS_FIELD("scene.margin", scene.margin),
      SESS_FIELD("scene.random_heading", scene.random_heading),
      SESS_FIELD("scene.occlude_half", scene.occlude_half),

      SESS_FIELD("detector.hidden_width", detector.hidden_width),
      SESS_FIELD("detector.proposal_count", detector.proposal_count),
      SESS_FIELD("detector.positive_radius", detector.positive_radius),
      SESS_FIELD("detector.group_radius", detector.group_radius),
      SESS_FIELD("detector.group_size", detector.group_size),
      SESS_FIELD("detector.inside_margin", detector.inside_margin),
      SESS_FIELD("detector.w_objectness", detector.loss_weights.objectness),
      SESS_FIELD("detector.w_center", detector.loss_weights.center),
      SESS_FIELD("detector.w_size", detector.loss_weights.size),
      SESS_FIELD("detector.w_class", detector.loss_weights.cls),

      SESS_FIELD("perturb.subsample_count", perturb.subsample_count),
      SESS_FIELD("perturb.rotation_bound", perturb.rotation_bound),
      SESS_FIELD("perturb.scale_min", perturb.scale_min),
      SESS_FIELD("perturb.scale_max", perturb.scale_max),
      SESS_FIELD("perturb.flip_x", perturb.enable_flip_x),
      SESS_FIELD("perturb.flip_y", perturb.enable_flip_y),
      SESS_FIELD("perturb.rotation", perturb.enable_rotation),
      SESS_FIELD("perturb.scaling", perturb.enable_scaling),
      SESS_FIELD("perturb.independent_subsamples", perturb.independent_subsamples),

      SESS_FIELD("consistency.center", consistency.center),
      SESS_FIELD("consistency.class", consistency.cls),
      SESS_FIELD("consistency.size", consistency.size),
      SESS_FIELD("consistency.objectness_filter", consistency.objectness_filter),

      SESS_FIELD("trainer.labeled_batch", trainer.labeled_batch),
      SESS_FIELD("trainer.unlabeled_batch", trainer.unlabeled_batch),
      SESS_FIELD("trainer.epochs", trainer.epochs),
      SESS_FIELD("trainer.pretrain_epochs", trainer.pretrain_epochs),
      SESS_FIELD("trainer.rampup_epochs", trainer.rampup_epochs),
      SESS_FIELD("trainer.consistency_max", trainer.consistency_max),
      SESS_FIELD("trainer.ema_alpha_rampup", trainer.ema_alpha_rampup),
      SESS_FIELD("trainer.ema_alpha_main", trainer.ema_alpha_main),
      SESS_FIELD("trainer.learning_rate", trainer.adam.learning_rate),
      SESS_FIELD("trainer.decay_epoch", trainer.adam.decay_epoch),
      SESS_FIELD("trainer.decay_factor", trainer.adam.decay_factor),
      SESS_FIELD("trainer.pretrain_learning_rate", trainer.pretrain_adam.learning_rate),
      SESS_FIELD("trainer.pretrain_decay_epoch", trainer.pretrain_adam.decay_epoch),
      SESS_FIELD("trainer.pretrain_decay_factor", trainer.pretrain_adam.decay_factor),
      SESS_FIELD("trainer.beta1", trainer.adam.beta1),
      SESS_FIELD("trainer.beta2", trainer.adam.beta2),
      SESS_FIELD("trainer.epsilon", trainer.adam.epsilon),
      SESS_FIELD("trainer.eval_every", trainer.eval_every),
      SESS_FIELD("trainer.infer_with_teacher", trainer.infer_with_teacher),
      SESS_FIELD("trainer.threads", trainer.threads),

      SESS_FIELD("eval.iou_thresholds", eval.iou_thresholds),
      SESS_FIELD("eval.nms_iou", eval.nms_iou),
      SESS_FIELD("eval.score_threshold", eval.score_threshold),
      SESS_FIELD("eval.num_points", eval.num_points),
      SESS_FIELD("eval.seed", eval.seed),

      SESS_FIELD("experiment.mode", mode),
      SESS_FIELD("experiment.ratio", ratio),
      SESS_FIELD("experiment.ratios", ratios),
      SESS_FIELD("experiment.seed", seed),
      SESS_FIELD("experiment.seeds", seeds),
      SESS_FIELD("experiment.disable_perturbation", disable_perturbation),
      SESS_FIELD("experiment.disable_consistency", disable_consistency),
      SESS_FIELD("experiment.out", out_dir),
  };
  return fields;
}

#undef SESS_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : registry())
    if (key == f.key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

// "name l w h spread; name l w h spread; ..."
std::vector<ClassShape> parse_classes(const std::string& key, const std::string& text) {
  std::vector<ClassShape> out;
  for (const auto& item : split_list(text, ';')) {
    std::istringstream in(item);
    ClassShape c;
    std::string l, w, h, spread, extra;
    if (!(in >> c.name >> l >> w >> h >> spread) || (in >> extra))
      throw ConfigError("config key '" + key + "': expected 'name l w h spread', got '" + item + "'");
    c.mean_size = {parse_number<double>(key, l), parse_number<double>(key, w), parse_number<double>(key, h)};
    c.spread = parse_number<double>(key, spread);
    out.push_back(c);
  }
  return out;
}

std::string format_classes(const std::vector<ClassShape>& classes) {
  std::string out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i > 0) out += "; ";
    const auto& c = classes[i];
    out += c.name + " " + format_double(c.mean_size[0]) + " " + format_double(c.mean_size[1]) + " " +
           format_double(c.mean_size[2]) + " " + format_double(c.spread);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += fmt(v[i]);
  }
  return out;
}

void set_from_text(Ref ref, const std::string& key, const std::string& text) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, int>) {
          *p = parse_number<int>(key, text);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          *p = parse_number<std::uint64_t>(key, text);
        } else if constexpr (std::is_same_v<T, double>) {
          *p = parse_number<double>(key, text);
        } else if constexpr (std::is_same_v<T, bool>) {
          *p = parse_bool(key, text);
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = trim(text);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          p->clear();
          for (const auto& s : split_list(text, ',')) p->push_back(parse_number<double>(key, s));
        } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
          p->clear();
          for (const auto& s : split_list(text, ',')) p->push_back(parse_number<std::uint64_t>(key, s));
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
          *p = split_list(text, ',');
        } else if constexpr (std::is_same_v<T, TrainMode>) {
          *p = parse_train_mode(trim(text));
        } else {
          *p = parse_classes(key, text);
        }
      },
      ref);
}

std::string get_as_text(Ref ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
          return std::to_string(*p);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(*p);
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          return join<double>(*p, format_double);
        } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
          return join<std::uint64_t>(*p, [](const std::uint64_t& v) { return std::to_string(v); });
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
          return join<std::string>(*p, [](const std::string& v) { return v; });
        } else if constexpr (std::is_same_v<T, TrainMode>) {
          return to_string(*p);
        } else {
          return format_classes(*p);
        }
      },
      ref);
}

Json get_as_json(Ref ref) {
  return std::visit(
      [](auto* p) -> Json {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TrainMode>) {
          return to_string(*p);
        } else if constexpr (std::is_same_v<T, std::vector<ClassShape>>) {
          Json arr = Json::array();
          for (const auto& c : *p)
            arr.push_back({{"name", c.name}, {"mean_size", c.mean_size}, {"spread", c.spread}});
          return arr;
        } else {
          return *p;
        }
      },
      ref);
}

void set_from_json(Ref ref, const std::string& key, const Json& value) {
  try {
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, TrainMode>) {
            *p = parse_train_mode(value.get<std::string>());
          } else if constexpr (std::is_same_v<T, std::vector<ClassShape>>) {
            p->clear();
            for (const auto& c : value) {
              ClassShape s;
              s.name = c.at("name").get<std::string>();
              s.mean_size = c.at("mean_size").get<Vec3>();
              s.spread = c.at("spread").get<double>();
              p->push_back(s);
            }
          } else {
            *p = value.get<T>();
          }
        },
        ref);
  } catch (const Json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }
std::string name_of(const std::string& key) { return key.substr(key.find('.') + 1); }

}  // namespace

std::string to_string(TrainMode mode) { return mode == TrainMode::kBaseline ? "baseline" : "sess"; }

TrainMode parse_train_mode(const std::string& text) {
  if (text == "baseline") return TrainMode::kBaseline;
  if (text == "sess") return TrainMode::kSess;
  throw ConfigError("mode must be 'baseline' or 'sess', got '" + text + "'");
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  check(train_scenes >= 1 && val_scenes >= 1, "data.train_scenes and data.val_scenes must be >= 1");
  check(ratio > 0.0 && ratio <= 1.0, "experiment.ratio must lie in (0, 1]");
  check(!ratios.empty(), "experiment.ratios must list at least one ratio");
  for (double r : ratios) check(r > 0.0 && r <= 1.0, "experiment.ratios must lie in (0, 1]");
  check(!seeds.empty(), "experiment.seeds must list at least one seed");
  for (const auto& name : disable_consistency)
    check(name == "center" || name == "class" || name == "size",
          "unknown consistency term '" + name + "' (expected center, class or size)");
  check(consistency.center >= 0.0 && consistency.cls >= 0.0 && consistency.size >= 0.0,
        "consistency weights must be >= 0");
  check(!eval.iou_thresholds.empty(), "eval.iou_thresholds must not be empty");
  for (double t : eval.iou_thresholds) check(t > 0.0 && t <= 1.0, "eval.iou_thresholds must lie in (0, 1]");
  check(eval.nms_iou > 0.0 && eval.nms_iou <= 1.0, "eval.nms_iou must lie in (0, 1]");
  try {
    scene.validate();
    const SessConfig r = resolved();
    r.detector.validate();
    r.perturb.validate();
    r.trainer.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

SessConfig ExperimentConfig::resolved() const {
  SessConfig r;
  r.detector = detector;
  r.detector.class_count = scene.class_count();
  r.perturb = perturb;
  try {
    for (const auto& name : disable_perturbation) {
      if (name == "all")
        r.perturb.disable_all();
      else
        r.perturb.disable(name);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  r.consistency = consistency;
  for (const auto& name : disable_consistency) {
    if (name == "center") r.consistency.center = 0.0;
    if (name == "class") r.consistency.cls = 0.0;
    if (name == "size") r.consistency.size = 0.0;
  }
  r.trainer = trainer;
  r.trainer.seed = seed;
  r.trainer.pretrain_adam.beta1 = trainer.adam.beta1;
  r.trainer.pretrain_adam.beta2 = trainer.adam.beta2;
  r.trainer.pretrain_adam.epsilon = trainer.adam.epsilon;
  return r;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : registry()) keys.emplace_back(f.key);
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  set_from_text(find_field(key).ref(config), key, value);
}

std::string get_config_value(const ExperimentConfig& config, const std::string& key) {
  return get_as_text(find_field(key).ref(const_cast<ExperimentConfig&>(config)));
}

ConfigEntries config_entries(const ExperimentConfig& config) {
  ConfigEntries out;
  for (const auto& f : registry()) out.emplace_back(f.key, get_as_text(f.ref(const_cast<ExperimentConfig&>(config))));
  return out;
}

ExperimentConfig parse_ini(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  ExperimentConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config file: key '" + section + "' must appear inside a [section]");
    for (const auto& [name, value] : body) set_config_value(config, section + "." + name, value.data());
  }
  return config;
}

ExperimentConfig load_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str());
}

std::string format_ini(const ExperimentConfig& config) {
  std::string out;
  std::string current;
  for (const auto& [key, value] : config_entries(config)) {
    const std::string section = section_of(key);
    if (section != current) {
      if (!current.empty()) out += '\n';
      out += "[" + section + "]\n";
      current = section;
    }
    out += name_of(key) + " = " + value + "\n";
  }
  return out;
}

std::string config_to_json(const ExperimentConfig& config) {
  Json j = Json::object();
  for (const auto& f : registry())
    j[section_of(f.key)][name_of(f.key)] = get_as_json(f.ref(const_cast<ExperimentConfig&>(config)));
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  if (j.contains("config")) j = j["config"];
  if (!j.is_object()) throw ConfigError("manifest: expected a JSON object of config sections");
  ExperimentConfig config;
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) throw ConfigError("manifest: section '" + section + "' is not an object");
    for (const auto& [name, value] : body.items()) {
      const std::string key = section + "." + name;
      set_from_json(find_field(key).ref(config), key, value);
    }
  }
  return config;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return config_from_json(text);
  return parse_ini(text);
}

}  // namespace sess
