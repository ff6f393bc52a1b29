// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

// Small scenes and a small detector so that training tests run in well
// under a second.

#pragma once

#include "sess/config.hpp"
#include "sess/mean_teacher.hpp"
#include "sess/scene_gen.hpp"

namespace sess::testing {

inline SceneSpec tiny_spec() {
  SceneSpec spec = SceneSpec::desk_default();
  spec.min_points_per_object = 24;
  spec.max_points_per_object = 40;
  spec.clutter_points = 40;
  return spec;
}

inline SessConfig tiny_session() {
  SessConfig c;
  c.detector.hidden_width = 8;
  c.detector.proposal_count = 8;
  c.detector.group_size = 8;
  c.detector.class_count = tiny_spec().class_count();
  c.perturb.subsample_count = 64;
  c.trainer.labeled_batch = 2;
  c.trainer.unlabeled_batch = 3;
  c.trainer.pretrain_epochs = 2;
  c.trainer.epochs = 3;
  c.trainer.rampup_epochs = 2;
  return c;
}

inline DatasetSplit tiny_split(std::size_t scenes = 12, double ratio = 0.5, std::uint64_t seed = 1) {
  const SceneSpec spec = tiny_spec();
  Rng rng(seed);
  DatasetSplit s = split_dataset(generate_scenes(spec, seed, 0, scenes), ratio, spec.class_count(), rng);
  s.validation = generate_scenes(spec, seed, static_cast<std::int64_t>(scenes), 4);
  return s;
}

/// Experiment config matching the tiny fixtures, with data generated in memory.
inline ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.scene = tiny_spec();
  c.train_scenes = 16;
  c.val_scenes = 4;
  const SessConfig s = tiny_session();
  c.detector = s.detector;
  c.perturb = s.perturb;
  c.trainer = s.trainer;
  c.eval.num_points = 64;
  c.ratio = 0.25;
  c.seeds = {0, 1};
  return c;
}

}  // namespace sess::testing
