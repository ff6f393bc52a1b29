// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "sess/perturb.hpp"

namespace sess {

std::vector<std::size_t> nms_indices(const std::vector<Detection>& dets, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw std::invalid_argument("nms threshold must lie in (0, 1]");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return dets[k].scene_id != dets[i].scene_id || iou3d(dets[k].box, dets[i].box) < iou_threshold;
    });
    if (clear) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
  return out;
}

void sort_by_score(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
}

std::vector<bool> match_detections(const std::vector<Detection>& dets, const GroundTruth& gts, double iou_threshold) {
  std::map<std::int64_t, std::vector<bool>> claimed;
  for (const auto& [id, boxes] : gts) claimed[id].assign(boxes.size(), false);

  std::vector<bool> tp(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto it = gts.find(dets[i].scene_id);
    if (it == gts.end()) continue;
    const auto& boxes = it->second;
    auto& used = claimed[dets[i].scene_id];
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < boxes.size(); ++g) {
      if (used[g] || boxes[g].class_id != dets[i].box.class_id) continue;
      const double iou = iou3d(dets[i].box, boxes[g]);
      if (iou > best) {
        best = iou;
        best_g = g;
      }
    }
    if (best >= iou_threshold) {
      used[best_g] = true;
      tp[i] = true;
    }
  }
  return tp;
}

double average_precision(const std::vector<bool>& tp_sequence, std::size_t gt_count) {
  if (gt_count == 0) return 0.0;
  const std::size_t n = tp_sequence.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_sequence[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Precision envelope: best precision at this recall or beyond.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  // Recall rises by exactly 1/gt_count at every true positive.
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (tp_sequence[i]) sum += precision[i];
  return sum / static_cast<double>(gt_count);
}

std::string to_string(EvalMode mode) { return mode == EvalMode::kInductive ? "inductive" : "transductive"; }

double EvalReport::map_at(double iou_threshold) const {
  for (std::size_t t = 0; t < iou_thresholds.size(); ++t)
    if (std::abs(iou_thresholds[t] - iou_threshold) < 1e-12) return map[t];
  throw std::out_of_range("mAP was not evaluated at the requested IoU threshold");
}

EvalReport evaluate_detections(const std::vector<Detection>& dets, const GroundTruth& gts, int class_count,
                               const std::vector<double>& iou_thresholds) {
  const auto K = static_cast<std::size_t>(class_count);
  EvalReport report;
  report.class_count = class_count;
  report.iou_thresholds = iou_thresholds;
  report.gt_count.assign(K, 0);
  report.det_count.assign(K, 0);
  for (const auto& [id, boxes] : gts)
    for (const auto& b : boxes) ++report.gt_count.at(static_cast<std::size_t>(b.class_id));

  std::vector<Detection> sorted = dets;
  sort_by_score(sorted);
  for (const auto& d : sorted) ++report.det_count.at(static_cast<std::size_t>(d.box.class_id));

  for (double thr : iou_thresholds) {
    const std::vector<bool> tp = match_detections(sorted, gts, thr);
    std::vector<double> ap(K, 0.0);
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<bool> seq;
      for (std::size_t i = 0; i < sorted.size(); ++i)
        if (static_cast<std::size_t>(sorted[i].box.class_id) == k) seq.push_back(tp[i]);
      ap[k] = average_precision(seq, report.gt_count[k]);
      if (report.gt_count[k] > 0) {
        sum += ap[k];
        ++counted;
      }
    }
    report.ap.push_back(ap);
    report.map.push_back(counted > 0 ? sum / static_cast<double>(counted) : 0.0);
  }
  return report;
}

std::vector<Detection> detect_scene(const ParamVector& params, const DetectorConfig& detector,
                                    const LabeledScene& scene, const EvalConfig& config) {
  PointCloud input = scene.cloud;
  if (config.num_points > 0) {
    Rng rng = Rng::derive(config.seed, {0xe7a1, static_cast<std::uint64_t>(scene.scene_id)});
    input = random_subsample(scene.cloud, config.num_points, rng);
  }
  const ProposalSet props = predict(params, input, detector);
  std::vector<Detection> dets;
  for (const auto& p : props.proposals) {
    if (p.objectness < config.score_threshold) continue;
    Detection d;
    d.box.class_id = p.predicted_class();
    d.box.center = p.center;
    d.box.size = p.size;
    d.box.heading = p.heading;
    d.score = p.objectness;
    d.scene_id = scene.scene_id;
    dets.push_back(d);
  }
  return nms(dets, config.nms_iou);
}

EvalReport evaluate(const ParamVector& params, const DetectorConfig& detector, const std::vector<LabeledScene>& scenes,
                    const EvalConfig& config, EvalMode mode) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: no scenes to evaluate");
  std::vector<Detection> all;
  GroundTruth gts;
  for (const auto& scene : scenes) {
    auto dets = detect_scene(params, detector, scene, config);
    all.insert(all.end(), dets.begin(), dets.end());
    gts[scene.scene_id] = scene.boxes;
  }
  EvalReport report = evaluate_detections(all, gts, detector.class_count, config.iou_thresholds);
  report.mode = mode;
  report.score_threshold = config.score_threshold;
  return report;
}

std::string format_report_csv(const EvalReport& report) {
  std::string out = "class,iou_thresh,ap,gt_count,det_count\n";
  char buf[160];
  const std::size_t gt_total = std::accumulate(report.gt_count.begin(), report.gt_count.end(), std::size_t{0});
  const std::size_t det_total = std::accumulate(report.det_count.begin(), report.det_count.end(), std::size_t{0});
  for (std::size_t t = 0; t < report.iou_thresholds.size(); ++t) {
    for (int k = 0; k < report.class_count; ++k) {
      std::snprintf(buf, sizeof(buf), "%d,%.2f,%.6f,%zu,%zu\n", k, report.iou_thresholds[t], report.ap[t][k],
                    report.gt_count[k], report.det_count[k]);
      out += buf;
    }
  }
  for (std::size_t t = 0; t < report.iou_thresholds.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "mAP,%.2f,%.6f,%zu,%zu\n", report.iou_thresholds[t], report.map[t], gt_total,
                  det_total);
    out += buf;
  }
  return out;
}

}  // namespace sess
