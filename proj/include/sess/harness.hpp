// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sess/config.hpp"
#include "sess/eval.hpp"
#include "sess/mean_teacher.hpp"

namespace sess {

/// Training pool (labeled + unlabeled scenes of a dataset, sorted by id) and
/// validation scenes.
struct Corpus {
  int class_count = 0;
  std::uint64_t seed = 0;
  std::vector<LabeledScene> pool;
  std::vector<LabeledScene> validation;
};

/// Reads `data.dir`, or generates the scenes in memory when it is empty.
/// A missing dataset directory is a ConfigError.
Corpus load_corpus(const ExperimentConfig& config);

/// Train pool and validation scenes exactly as `generate` writes them.
Corpus generate_corpus(const ExperimentConfig& config);

/// Labeled/unlabeled split of the pool for one run, drawn from the run seed
/// with class-coverage resampling. Validation scenes are attached.
DatasetSplit make_run_split(const Corpus& corpus, double ratio, std::uint64_t seed);

/// Module configs of one run with the corpus' class count and the
/// SESS_FORGE_THREADS cap applied.
SessConfig run_config(const ExperimentConfig& config, const Corpus& corpus);

struct RunOutcome {
  TrainMode mode = TrainMode::kSess;
  TrainState state;
  /// Both phases, epochs numbered consecutively from 0.
  std::vector<EpochMetrics> metrics;
  std::size_t pretrain_epochs = 0;
  std::vector<std::int64_t> labeled_ids;
  std::vector<std::int64_t> unlabeled_ids;
  EvalReport inductive;
  std::optional<EvalReport> transductive;

  /// Parameters used for inference (student unless infer_with_teacher).
  const ParamVector& inference_params(const TrainerConfig& trainer) const;
};

/// Memoises pre-training and whole runs by their full configuration so
/// sweep and ablation cells that share work compute it once.
class RunCache {
 public:
  std::optional<TrainResult> find_pretrain(const std::string& key) const;
  void store_pretrain(const std::string& key, const TrainResult& result);
  std::optional<RunOutcome> find_run(const std::string& key) const;
  void store_run(const std::string& key, const RunOutcome& outcome);

 private:
  std::map<std::string, TrainResult> pretrain_;
  std::map<std::string, RunOutcome> runs_;
};

/// Pre-training, then (sess mode) the Mean-Teacher phase, then inductive
/// evaluation on the validation scenes and transductive evaluation on the
/// run's unlabeled scenes (skipped when there are none).
RunOutcome run_experiment(const ExperimentConfig& config, const Corpus& corpus, RunCache* cache = nullptr);

/// Run manifest: resolved config, seed, dataset identity, split membership
/// and headline results. `train --config` accepts it.
std::string format_run_manifest(const ExperimentConfig& config, const Corpus& corpus, const RunOutcome& outcome,
                                const std::string& command);

/// checkpoint.txt (the inference weights; student_/teacher_checkpoint.txt too in
/// sess mode), metrics.csv and manifest.json.
void write_run(const std::filesystem::path& dir, const ExperimentConfig& config, const Corpus& corpus,
               const RunOutcome& outcome, const std::string& command);

/// eval_<mode>.csv per report and eval.json with the headline numbers.
void write_eval_reports(const std::filesystem::path& dir, const std::vector<EvalReport>& reports);

double mean_of(const std::vector<double>& v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_std(const std::vector<double>& v);

enum class EvalSelection { kInductive, kTransductive, kBoth };
EvalSelection parse_eval_selection(const std::string& text);

// ---- subcommands; each returns a process exit code ----

int cli_generate(const ExperimentConfig& config, std::ostream& log);
int cli_train(const ExperimentConfig& config, std::ostream& log);
/// `checkpoint` is a checkpoint file or a run directory holding checkpoint.txt.
int cli_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint, EvalSelection selection,
             std::ostream& log);
/// `cache`, when given, is shared with the caller so that cells computed
/// elsewhere are reused.
int cli_sweep(const ExperimentConfig& config, std::ostream& log, RunCache* cache = nullptr);
int cli_ablate(const ExperimentConfig& config, std::ostream& log, RunCache* cache = nullptr);

/// The seven on/off combinations of {center, class, size}, all-off excluded,
/// in the order center, class, size, center+class, center+size, class+size, all.
std::vector<std::vector<std::string>> consistency_ablation_grid();

struct PerturbationVariant {
  std::string name;
  std::vector<std::string> disabled;
};
/// full, each single perturbation removed, and none.
std::vector<PerturbationVariant> perturbation_ablation_grid();

}  // namespace sess
