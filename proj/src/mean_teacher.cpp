// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/mean_teacher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <thread>

namespace sess {

namespace {

enum Phase : std::uint64_t { kPretrainPhase = 1, kSessPhase = 2 };

struct SlotResult {
  std::vector<double> grad;
  double sup_loss = 0.0;
  double cons_center = 0.0;
  double cons_class = 0.0;
  double cons_size = 0.0;
  double cons_total = 0.0;
};

SlotResult run_slot(const TrainState& state, const LabeledScene& scene, bool labeled, std::size_t slot,
                    const SessConfig& config, const StepSchedule& schedule, double sup_scale, double cons_scale) {
  Rng rng = Rng::derive(schedule.stream_seed, {slot});
  const PointCloud x_s = random_subsample(scene.cloud, config.perturb.subsample_count, rng);
  const PointCloud x_t = config.perturb.independent_subsamples
                             ? random_subsample(scene.cloud, config.perturb.subsample_count, rng)
                             : x_s;
  const TransformSample t = sample_transform(config.perturb, rng);

  const ForwardResult student = forward(state.student, transform_points(t, x_s), config.detector);
  OutputGradient out_grad(student.proposals.size(), config.detector.class_count);
  SlotResult result;

  if (labeled) {
    std::vector<Box3D> gts;
    gts.reserve(scene.boxes.size());
    for (const auto& b : scene.boxes) gts.push_back(transform_box(t, b));
    const SupervisedLoss sup = supervised_loss(student.proposals, gts, config.detector);
    result.sup_loss = sup.total;
    out_grad.add_scaled(sup.grad, sup_scale);
  }

  if (schedule.consistency_weight > 0.0) {
    const ProposalSet teacher = transform_proposals(t, predict(state.teacher, x_t, config.detector));
    const ConsistencyLoss cons = total_consistency(student.proposals, teacher, config.consistency);
    result.cons_center = cons.center;
    result.cons_class = cons.cls;
    result.cons_size = cons.size;
    result.cons_total = cons.total;
    out_grad.add_scaled(cons.grad, cons_scale * schedule.consistency_weight);
  }

  result.grad.assign(state.student.size(), 0.0);
  backward_accumulate(state.student, student.cache, out_grad, config.detector, result.grad);
  return result;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

bool should_validate(int epoch, int total, int every) {
  if (epoch + 1 == total) return true;
  return every > 0 && (epoch + 1) % every == 0;
}

TrainResult run_phase(const DatasetSplit& split, const SessConfig& config, TrainState state, Phase phase,
                      int epochs, const Validator& validate) {
  const TrainerConfig& tc = config.trainer;
  const AdamConfig& adam = phase == kPretrainPhase ? tc.pretrain_adam : tc.adam;
  TrainerConfig batch_config = tc;
  if (phase == kPretrainPhase) batch_config.unlabeled_batch = 0;

  TrainResult result;
  auto& log = phase == kPretrainPhase ? result.pretrain_log : result.log;
  if (split.labeled.empty()) throw std::invalid_argument("training needs a non-empty labeled pool");
  const auto steps_per_epoch = static_cast<long>(
      (split.labeled.size() + static_cast<std::size_t>(tc.labeled_batch) - 1) / static_cast<std::size_t>(tc.labeled_batch));

  Rng batch_rng = Rng::derive(tc.seed, {phase, 0xba7c});
  for (int epoch = 0; epoch < epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    for (long s = 0; s < steps_per_epoch; ++s) {
      const Batch batch = make_batch(split, batch_config, batch_rng);
      StepSchedule schedule;
      schedule.lr = learning_rate_at(adam, epoch);
      if (phase == kPretrainPhase) {
        schedule.consistency_weight = 0.0;
        schedule.alpha = 0.0;  // teacher simply tracks the student
      } else {
        schedule.consistency_weight = rampup_weight(epoch, tc);
        schedule.alpha = ema_alpha_at(epoch, tc);
      }
      schedule.stream_seed = Rng::derive(tc.seed, {phase, static_cast<std::uint64_t>(state.global_step)}).next_u64();
      const StepMetrics m = train_step(state, batch, config, schedule, adam);
      em.sup_loss += m.sup_loss / static_cast<double>(steps_per_epoch);
      em.cons_center += m.cons_center / static_cast<double>(steps_per_epoch);
      em.cons_class += m.cons_class / static_cast<double>(steps_per_epoch);
      em.cons_size += m.cons_size / static_cast<double>(steps_per_epoch);
      em.cons_weight = m.cons_weight;
      em.lr = m.lr;
    }
    state.epoch = epoch + 1;
    if (validate && should_validate(epoch, epochs, tc.eval_every)) em.val_map25 = validate(state);
    log.push_back(em);
  }
  result.state = std::move(state);
  return result;
}

}  // namespace

void TrainerConfig::validate() const {
  if (labeled_batch < 1) throw std::invalid_argument("labeled_batch must be >= 1");
  if (unlabeled_batch < 0) throw std::invalid_argument("unlabeled_batch must be >= 0");
  if (epochs < 0 || pretrain_epochs < 0) throw std::invalid_argument("epoch counts must be >= 0");
  if (rampup_epochs < 0 || (epochs > 0 && rampup_epochs > epochs))
    throw std::invalid_argument("rampup_epochs must lie in [0, epochs]");
  for (double a : {ema_alpha_rampup, ema_alpha_main})
    if (!(a >= 0.0 && a < 1.0)) throw std::invalid_argument("EMA alpha must lie in [0, 1)");
  if (!(consistency_max >= 0.0)) throw std::invalid_argument("consistency_max must be >= 0");
  for (const AdamConfig* a : {&adam, &pretrain_adam})
    if (!(a->learning_rate > 0.0) || a->decay_epoch < 0 || !(a->decay_factor > 0.0))
      throw std::invalid_argument("learning rate and decay factor must be > 0, decay epoch >= 0");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

void ema_update(ParamVector& teacher, const ParamVector& student, double alpha) {
  if (!(teacher.layout == student.layout)) throw std::invalid_argument("ema_update: layouts differ");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("ema_update: alpha must lie in [0, 1)");
  const double beta = 1.0 - alpha;
  for (std::size_t i = 0; i < teacher.values.size(); ++i)
    teacher.values[i] = alpha * teacher.values[i] + beta * student.values[i];
}

double rampup_weight(double epoch, const TrainerConfig& config) {
  if (epoch < 0.0) throw std::invalid_argument("rampup_weight: negative epoch");
  const double t = config.rampup_epochs > 0 ? std::min(epoch / config.rampup_epochs, 1.0) : 1.0;
  return config.consistency_max * std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

double ema_alpha_at(int epoch, const TrainerConfig& config) {
  return epoch < config.rampup_epochs ? config.ema_alpha_rampup : config.ema_alpha_main;
}

Batch make_batch(const DatasetSplit& split, const TrainerConfig& config, Rng& rng) {
  Batch batch;
  if (config.labeled_batch > 0 && split.labeled.empty())
    throw std::invalid_argument("make_batch: labeled pool is empty");
  if (config.unlabeled_batch > 0 && split.unlabeled.empty())
    throw std::invalid_argument("make_batch: unlabeled pool is empty");
  for (int i = 0; i < config.labeled_batch; ++i) batch.labeled.push_back(&split.labeled[rng.index(split.labeled.size())]);
  for (int i = 0; i < config.unlabeled_batch; ++i)
    batch.unlabeled.push_back(&split.unlabeled[rng.index(split.unlabeled.size())]);
  return batch;
}

StepMetrics train_step(TrainState& state, const Batch& batch, const SessConfig& config, const StepSchedule& schedule) {
  return train_step(state, batch, config, schedule, config.trainer.adam);
}

StepMetrics train_step(TrainState& state, const Batch& batch, const SessConfig& config, const StepSchedule& schedule,
                       const AdamConfig& adam) {
  const std::size_t n_labeled = batch.labeled.size();
  const std::size_t n_slots = batch.size();
  if (n_slots == 0) throw std::invalid_argument("train_step: empty batch");
  const double sup_scale = n_labeled > 0 ? 1.0 / static_cast<double>(n_labeled) : 0.0;
  const double cons_scale = 1.0 / static_cast<double>(n_slots);

  std::vector<SlotResult> results(n_slots);
  auto work = [&](std::size_t slot) {
    const bool labeled = slot < n_labeled;
    const LabeledScene& scene = labeled ? *batch.labeled[slot] : *batch.unlabeled[slot - n_labeled];
    results[slot] = run_slot(state, scene, labeled, slot, config, schedule, sup_scale, cons_scale);
  };
  const auto workers = static_cast<std::size_t>(std::max(1, config.trainer.threads));
  if (workers <= 1 || n_slots == 1) {
    for (std::size_t s = 0; s < n_slots; ++s) work(s);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n_slots); ++w)
      pool.emplace_back([&, w] {
        for (std::size_t s = w; s < n_slots; s += workers) work(s);
      });
    for (auto& t : pool) t.join();
  }

  // Reduction in slot order keeps the result independent of the worker count.
  std::vector<double> grad(state.student.size(), 0.0);
  StepMetrics m;
  for (std::size_t s = 0; s < n_slots; ++s) {
    const SlotResult& r = results[s];
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
    m.sup_loss += r.sup_loss * sup_scale;
    m.cons_center += r.cons_center * cons_scale;
    m.cons_class += r.cons_class * cons_scale;
    m.cons_size += r.cons_size * cons_scale;
    m.cons_total += r.cons_total * cons_scale;
  }

  adam_step(state.student.values, grad, state.adam, schedule.lr, adam);
  ema_update(state.teacher, state.student, schedule.alpha);
  ++state.global_step;

  m.cons_weight = schedule.consistency_weight;
  m.lr = schedule.lr;
  m.alpha = schedule.alpha;
  return m;
}

std::string format_metric_log(const std::vector<EpochMetrics>& log) {
  std::string out = "epoch,sup_loss,cons_center,cons_class,cons_size,cons_weight,lr,val_map25\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch);
    for (double v : {e.sup_loss, e.cons_center, e.cons_class, e.cons_size, e.cons_weight, e.lr}) {
      out += ',';
      out += format_number(v);
    }
    out += ',';
    if (e.val_map25) out += format_number(*e.val_map25);
    out += '\n';
  }
  return out;
}

TrainResult pretrain(const DatasetSplit& split, const SessConfig& config, const Validator& validate) {
  config.trainer.validate();
  config.detector.validate();
  config.perturb.validate();
  Rng init_rng = Rng::derive(config.trainer.seed, {0x1417});
  TrainState state;
  state.student = init_params(config.detector, init_rng);
  state.teacher = state.student;
  return run_phase(split, config, std::move(state), kPretrainPhase, config.trainer.pretrain_epochs, validate);
}

TrainResult train_sess(const DatasetSplit& split, const SessConfig& config, const ParamVector& init,
                       const Validator& validate) {
  config.trainer.validate();
  config.detector.validate();
  config.perturb.validate();
  TrainState state;
  state.student = init;
  state.teacher = init;
  if (config.trainer.epochs == 0) {
    TrainResult result;
    result.state = std::move(state);
    return result;
  }
  return run_phase(split, config, std::move(state), kSessPhase, config.trainer.epochs, validate);
}

TrainResult train(const DatasetSplit& split, const SessConfig& config, const Validator& validate,
                  const ParamVector* pretrained) {
  std::vector<EpochMetrics> pre_log;
  ParamVector init;
  if (pretrained != nullptr) {
    init = *pretrained;
  } else {
    TrainResult pre = pretrain(split, config, validate);
    pre_log = std::move(pre.pretrain_log);
    init = std::move(pre.state.student);
  }
  TrainResult result = train_sess(split, config, init, validate);
  result.pretrain_log = std::move(pre_log);
  return result;
}

}  // namespace sess
