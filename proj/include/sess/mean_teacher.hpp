// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sess/consistency.hpp"
#include "sess/detector.hpp"
#include "sess/perturb.hpp"
#include "sess/scene_gen.hpp"

namespace sess {

struct TrainerConfig {
  int labeled_batch = 2;
  int unlabeled_batch = 8;
  /// Mean-Teacher phase length; an epoch is one pass over the labeled pool.
  int epochs = 100;
  /// Supervised-only epochs whose result initialises student and teacher.
  int pretrain_epochs = 30;
  int rampup_epochs = 30;
  double consistency_max = 10.0;
  double ema_alpha_rampup = 0.99;
  double ema_alpha_main = 0.999;
  /// Optimizer of the Mean-Teacher phase; epochs count from the phase start.
  AdamConfig adam;
  /// Optimizer of the pre-training phase.
  AdamConfig pretrain_adam;
  std::uint64_t seed = 0;
  /// Validation mAP@0.25 is logged every this many epochs and after the last (0 = last only).
  int eval_every = 0;
  /// Evaluate with the teacher instead of the student.
  bool infer_with_teacher = false;
  /// Worker threads for per-scene forward/backward; results do not depend on it.
  int threads = 1;

  void validate() const;
  bool operator==(const TrainerConfig&) const = default;
};

/// Everything a training step needs besides the data.
struct SessConfig {
  DetectorConfig detector;
  PerturbConfig perturb;
  ConsistencyWeights consistency;
  TrainerConfig trainer;
};

struct TrainState {
  ParamVector student;
  ParamVector teacher;
  AdamState adam;
  long global_step = 0;
  int epoch = 0;

  bool operator==(const TrainState&) const = default;
};

/// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
void ema_update(ParamVector& teacher, const ParamVector& student, double alpha);

/// consistency_max * exp(-5 (1 - T)^2) with T = min(epoch / rampup_epochs, 1).
double rampup_weight(double epoch, const TrainerConfig& config);

/// Ramp-up alpha before rampup_epochs, main alpha from that epoch on.
double ema_alpha_at(int epoch, const TrainerConfig& config);

struct Batch {
  std::vector<const LabeledScene*> labeled;
  std::vector<const LabeledScene*> unlabeled;

  std::size_t size() const { return labeled.size() + unlabeled.size(); }
};

/// Uniform draws with replacement from each pool. Throws when labeled
/// scenes are requested from an empty pool. With unlabeled_batch == 0 the
/// unlabeled pool is never touched.
Batch make_batch(const DatasetSplit& split, const TrainerConfig& config, Rng& rng);

struct StepMetrics {
  double sup_loss = 0.0;
  double cons_center = 0.0;
  double cons_class = 0.0;
  double cons_size = 0.0;
  double cons_total = 0.0;
  double cons_weight = 0.0;
  double lr = 0.0;
  double alpha = 0.0;
};

/// Per-step knobs that follow the schedule.
struct StepSchedule {
  double consistency_weight = 0.0;
  double alpha = 0.99;
  double lr = 1e-3;
  /// Root of the per-slot random streams for this step.
  std::uint64_t stream_seed = 0;
};

/// One student update followed by one EMA teacher update.
///
/// Per batch scene: two sub-samples x_s and x_t, one transform T; the student
/// sees T(x_s), the teacher sees x_t and its proposals are mapped through T.
/// Labeled scenes add the supervised loss against T(GT), averaged over the
/// labeled items; every scene adds the consistency loss, averaged over all
/// items and scaled by the schedule's weight. The teacher is skipped entirely
/// when that weight is 0.
StepMetrics train_step(TrainState& state, const Batch& batch, const SessConfig& config, const StepSchedule& schedule);
/// As above with an explicit optimizer configuration.
StepMetrics train_step(TrainState& state, const Batch& batch, const SessConfig& config, const StepSchedule& schedule,
                       const AdamConfig& adam);

struct EpochMetrics {
  int epoch = 0;
  double sup_loss = 0.0;
  double cons_center = 0.0;
  double cons_class = 0.0;
  double cons_size = 0.0;
  double cons_weight = 0.0;
  double lr = 0.0;
  std::optional<double> val_map25;
};

/// CSV with columns epoch, sup_loss, cons_center, cons_class, cons_size,
/// cons_weight, lr, val_map25 (empty when not evaluated).
std::string format_metric_log(const std::vector<EpochMetrics>& log);

/// Validation mAP@0.25 of the current state (the caller picks student or teacher).
using Validator = std::function<double(const TrainState&)>;

struct TrainResult {
  TrainState state;
  std::vector<EpochMetrics> pretrain_log;
  std::vector<EpochMetrics> log;
};

/// Supervised-only training on the labeled pool from freshly initialised
/// parameters. The unlabeled pool is not read.
TrainResult pretrain(const DatasetSplit& split, const SessConfig& config, const Validator& validate = {});

/// The Mean-Teacher phase starting with student = teacher = `init`.
TrainResult train_sess(const DatasetSplit& split, const SessConfig& config, const ParamVector& init,
                       const Validator& validate = {});

/// Pre-training (when pretrain_epochs > 0, unless `pretrained` is given)
/// followed by the Mean-Teacher phase. With epochs == 0 the phase is skipped.
TrainResult train(const DatasetSplit& split, const SessConfig& config, const Validator& validate = {},
                  const ParamVector* pretrained = nullptr);

}  // namespace sess
