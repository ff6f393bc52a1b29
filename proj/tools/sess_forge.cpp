// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

// sess_forge generate | train | eval | sweep | ablate

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sess/config.hpp"
#include "sess/harness.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> ratio;
  std::string mode;
  std::vector<std::string> disable_perturbation;
  std::vector<std::string> disable_consistency;
  std::optional<std::string> out;
  std::optional<std::string> data;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds;
  std::vector<double> ratios;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "INI config or run manifest.json");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--data", a.data, "dataset directory (default: generate in memory)");
  cmd->add_option("--set", a.sets, "override one key, e.g. --set trainer.epochs=20")->take_all();
}

void add_run_flags(CLI::App* cmd, CommonArgs& a, bool with_mode) {
  cmd->add_option("--seed", a.seed, "run seed");
  cmd->add_option("--ratio", a.ratio, "labeled ratio in (0, 1]");
  if (with_mode) cmd->add_option("--mode", a.mode, "baseline or sess")->check(CLI::IsMember({"baseline", "sess"}));
  cmd->add_option("--disable-perturbation", a.disable_perturbation,
                  "flip-x, flip-y, rotation, scaling, subsample-independence or all")
      ->check(CLI::IsMember({"flip-x", "flip-y", "rotation", "scaling", "subsample-independence", "all"}));
  cmd->add_option("--disable-consistency", a.disable_consistency, "center, class or size")
      ->check(CLI::IsMember({"center", "class", "size"}));
}

sess::ExperimentConfig build_config(const std::string& command, const CommonArgs& a) {
  sess::ExperimentConfig c;
  std::string config_path = a.config_path;
  if (config_path.empty() && command == "eval" && fs::is_directory(a.checkpoint) &&
      fs::exists(fs::path(a.checkpoint) / "manifest.json"))
    config_path = (fs::path(a.checkpoint) / "manifest.json").string();
  if (!config_path.empty()) c = sess::load_config_file(config_path);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw sess::ConfigError("--set expects key=value, got '" + kv + "'");
    sess::set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.data) c.data_dir = *a.data;
  if (a.out) c.out_dir = *a.out;
  if (a.seed) {
    if (command == "generate") {
      c.data_seed = *a.seed;
    } else {
      c.seed = *a.seed;
      c.seeds = {*a.seed};
    }
  }
  if (!a.seeds.empty()) c.seeds = a.seeds;
  if (a.ratio) {
    c.ratio = *a.ratio;
    c.ratios = {*a.ratio};
  }
  if (!a.ratios.empty()) c.ratios = a.ratios;
  if (!a.mode.empty() && command != "eval") c.mode = sess::parse_train_mode(a.mode);
  if (!a.disable_perturbation.empty()) c.disable_perturbation = a.disable_perturbation;
  if (!a.disable_consistency.empty()) c.disable_consistency = a.disable_consistency;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sess-forge: semi-supervised 3D detection with a Mean Teacher on synthetic scenes"};
  app.require_subcommand(1);
  CommonArgs args;

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(generate, args);
  generate->add_option("--seed", args.seed, "generator seed");
  generate->add_option("--ratio", args.ratio, "labeled ratio of the written split");

  CLI::App* train = app.add_subcommand("train", "pre-train, then (sess mode) Mean-Teacher training");
  add_common(train, args);
  add_run_flags(train, args, true);

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint");
  add_common(eval, args);
  add_run_flags(eval, args, false);
  std::string eval_mode = "both";
  eval->add_option("--checkpoint", args.checkpoint, "checkpoint file or run directory")->required();
  eval->add_option("--mode", eval_mode, "inductive, transductive or both")
      ->check(CLI::IsMember({"inductive", "transductive", "both"}));

  CLI::App* sweep = app.add_subcommand("sweep", "baseline vs sess over ratios and seeds");
  add_common(sweep, args);
  add_run_flags(sweep, args, false);
  sweep->add_option("--seeds", args.seeds, "seed list")->delimiter(',');
  sweep->add_option("--ratios", args.ratios, "ratio list")->delimiter(',');

  CLI::App* ablate = app.add_subcommand("ablate", "consistency-loss and perturbation ablations");
  add_common(ablate, args);
  add_run_flags(ablate, args, false);
  ablate->add_option("--seeds", args.seeds, "seed list")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    const sess::ExperimentConfig config = build_config(command, args);
    if (command == "generate") return sess::cli_generate(config, std::cerr);
    if (command == "train") return sess::cli_train(config, std::cerr);
    if (command == "eval")
      return sess::cli_eval(config, args.checkpoint, sess::parse_eval_selection(eval_mode), std::cerr);
    if (command == "sweep") return sess::cli_sweep(config, std::cerr);
    return sess::cli_ablate(config, std::cerr);
  } catch (const sess::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const sess::DatasetParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const sess::CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
