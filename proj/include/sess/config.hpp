// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sess/consistency.hpp"
#include "sess/detector.hpp"
#include "sess/eval.hpp"
#include "sess/mean_teacher.hpp"
#include "sess/perturb.hpp"
#include "sess/scene_gen.hpp"

namespace sess {

/// Bad configuration or usage; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrainMode { kBaseline, kSess };
std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

/// Everything one experiment needs. Sections of the config file mirror the
/// nested structs; see README for the key list.
struct ExperimentConfig {
  // [data]
  /// Dataset directory; empty means "generate in memory from [scene]".
  std::string data_dir;
  int train_scenes = 200;
  int val_scenes = 60;
  std::uint64_t data_seed = 0;

  // [scene]
  SceneSpec scene = SceneSpec::desk_default();

  DetectorConfig detector;       // [detector]
  PerturbConfig perturb;         // [perturb]
  ConsistencyWeights consistency;  // [consistency]
  TrainerConfig trainer;         // [trainer]
  EvalConfig eval;               // [eval]

  // [experiment]
  TrainMode mode = TrainMode::kSess;
  double ratio = 0.1;
  std::vector<double> ratios{0.1};
  /// Run seed: drives the labeled split, initialisation, batches and perturbations.
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> disable_perturbation;
  std::vector<std::string> disable_consistency;
  std::string out_dir = "out";

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// Module configs with the experiment's selectors applied (disabled
  /// perturbations / consistency terms, run seed, class count).
  SessConfig resolved() const;
};

/// `section.key` -> value text, in the order the registry lists them.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Every settable key, e.g. "trainer.epochs".
std::vector<std::string> config_keys();

/// Sets one `section.key` from text. Throws ConfigError on unknown keys or
/// unparsable values.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& config, const std::string& key);
ConfigEntries config_entries(const ExperimentConfig& config);

/// Reads an INI file (`[section]` headers, `key = value` lines, `;` or `#`
/// comments) on top of the defaults.
ExperimentConfig load_ini(const std::filesystem::path& path);
ExperimentConfig parse_ini(const std::string& text);
std::string format_ini(const ExperimentConfig& config);

/// Nested JSON object {section: {key: value}} with typed values.
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& json_text);

/// A run manifest (JSON with a "config" member) or an INI file, chosen by
/// content: files whose first non-blank character is '{' are JSON.
ExperimentConfig load_config_file(const std::filesystem::path& path);

}  // namespace sess
