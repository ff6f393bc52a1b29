// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sess/detector.hpp"
#include "sess/geometry.hpp"
#include "sess/scene_gen.hpp"

namespace sess {

struct Detection {
  Box3D box;
  double score = 0.0;
  std::int64_t scene_id = 0;
};

/// Class-agnostic greedy NMS. Returns indices into `dets` of the kept
/// detections in descending score order (ties: lower original index first).
/// A detection survives iff its IoU with every kept one is < iou_threshold.
/// Detections from different scenes never suppress each other.
std::vector<std::size_t> nms_indices(const std::vector<Detection>& dets, double iou_threshold);
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

using GroundTruth = std::map<std::int64_t, std::vector<Box3D>>;

/// Stable sort by descending score.
void sort_by_score(std::vector<Detection>& dets);

/// TP flag per detection. `dets` must already be sorted by score across the
/// whole split. Each detection claims the unclaimed same-class GT box in its
/// scene with the highest IoU when that IoU >= iou_threshold.
std::vector<bool> match_detections(const std::vector<Detection>& dets, const GroundTruth& gts, double iou_threshold);

/// All-point interpolated AP of a ranked TP/FP sequence. Returns 0 when
/// gt_count == 0; callers leave such classes out of the mean.
double average_precision(const std::vector<bool>& tp_sequence, std::size_t gt_count);

enum class EvalMode { kInductive, kTransductive };
std::string to_string(EvalMode mode);

struct EvalConfig {
  std::vector<double> iou_thresholds{0.25, 0.5};
  double nms_iou = 0.25;
  /// Proposals with objectness below this are dropped before NMS.
  double score_threshold = 0.05;
  /// Points fed to the network per scene (0 = the whole cloud).
  std::size_t num_points = 1024;
  std::uint64_t seed = 0;

  bool operator==(const EvalConfig&) const = default;
};

struct EvalReport {
  EvalMode mode = EvalMode::kInductive;
  int class_count = 0;
  double score_threshold = 0.0;
  std::vector<double> iou_thresholds;
  std::vector<std::vector<double>> ap;  // [threshold][class]
  std::vector<double> map;              // per threshold
  std::vector<std::size_t> gt_count;    // per class
  std::vector<std::size_t> det_count;   // per class, after NMS

  /// mAP at the given threshold; throws if it was not evaluated.
  double map_at(double iou_threshold) const;
};

/// Scores pre-computed detections against ground truth.
EvalReport evaluate_detections(const std::vector<Detection>& dets, const GroundTruth& gts, int class_count,
                               const std::vector<double>& iou_thresholds);

/// Proposals of one scene turned into detections (score threshold + NMS).
std::vector<Detection> detect_scene(const ParamVector& params, const DetectorConfig& detector,
                                    const LabeledScene& scene, const EvalConfig& config);

/// Runs the network over every scene, post-processes and scores. Throws on
/// an empty scene list.
EvalReport evaluate(const ParamVector& params, const DetectorConfig& detector, const std::vector<LabeledScene>& scenes,
                    const EvalConfig& config, EvalMode mode);

/// `class, iou_thresh, ap, gt_count, det_count` rows per (class, threshold)
/// followed by one `mAP` summary row per threshold.
std::string format_report_csv(const EvalReport& report);

}  // namespace sess
