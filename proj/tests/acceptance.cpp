// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Usage: acceptance [scratch dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradient_oracle.hpp"
#include "oracles.hpp"
#include "sess/harness.hpp"

using namespace sess;
using namespace sess::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << " ["
            << num(seconds_since(t0), 3) << " s]" << std::endl;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// CSV rows keyed by column name.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  std::getline(in, line);
  const auto header = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    const auto cells = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

const std::map<std::string, std::string>& row_where(const std::vector<std::map<std::string, std::string>>& rows,
                                                   const std::string& column, const std::string& value) {
  for (const auto& r : rows)
    if (r.count(column) && r.at(column) == value) return r;
  throw std::runtime_error("no row with " + column + " = " + value);
}

double cell(const std::map<std::string, std::string>& row, const std::string& column) {
  return std::stod(row.at(column));
}

/// Reruns the run stored in `dir` from its manifest and compares the metric
/// log byte for byte.
bool reproduces(const fs::path& dir, RunCache& cache) {
  const ExperimentConfig c = load_config_file(dir / "manifest.json");
  const RunOutcome o = run_experiment(c, load_corpus(c), &cache);
  return format_metric_log(o.metrics) == slurp(dir / "metrics.csv");
}

// ---- criteria ----

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  std::size_t rejected = 0;
  const auto instances = smooth_instances(10, 1, 1e-4, &rejected);
  double worst = 0.0;
  std::size_t params = 0;
  bool nontrivial = true;
  std::string per_loss;
  for (CheckedLoss loss : {CheckedLoss::kSupervised, CheckedLoss::kCenter, CheckedLoss::kClass, CheckedLoss::kSize}) {
    double loss_worst = 0.0;
    for (const auto& inst : instances) {
      const GradientReport r = check_gradient(inst, loss, 1e-4);
      loss_worst = std::max(loss_worst, r.max_relative_error);
      params = r.parameters;
      nontrivial = nontrivial && r.max_abs_gradient > 0.0;
    }
    per_loss += " " + to_string(loss) + " " + num(loss_worst, 2);
    worst = std::max(worst, loss_worst);
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && nontrivial && elapsed < 30.0,
          "max relative error" + per_loss + " (< 1e-4) on 10 instances, " + std::to_string(params) +
              " parameters each, " + std::to_string(rejected) + " non-smooth instances skipped, " + num(elapsed, 3) +
              " s (< 30 s)"};
}

Outcome iou_oracle() {
  Rng rng(2024), mc(7);
  double worst = 0.0;
  int rotated = 0;
  for (int i = 0; i < 100; ++i) {
    const Box3D a = random_box(rng, 3, 0.5), b = random_box(rng, 3, 0.5);
    rotated += std::abs(a.heading - b.heading) > 1e-3;
    worst = std::max(worst, std::abs(iou3d(a, b) - monte_carlo_iou(a, b, 1000000, mc)));
  }
  Box3D unit;
  Box3D shifted = unit;
  shifted.center[0] = 0.5;
  Box3D turned = unit;
  turned.heading = std::numbers::pi / 4;
  const double third = iou3d(unit, shifted), diag = iou3d(unit, turned);
  const bool ok = worst < 0.005 && std::abs(third - 1.0 / 3.0) < 1e-6 && std::abs(diag - 0.7071) < 1e-3;
  return {ok, "max |exact - Monte-Carlo| " + num(worst, 3) + " (< 0.005) over 100 pairs (" + std::to_string(rotated) +
                  " with differing headings); half-offset cubes " + num(third, 10) + ", 45-degree cubes " + num(diag, 6)};
}

std::vector<Detection> random_detections(Rng& rng, std::size_t n, int classes, int scenes) {
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    Detection d;
    d.box = random_box(rng, classes, 0.8);
    d.score = static_cast<double>(rng.integer(1, 6)) / 6.0;
    d.scene_id = rng.integer(0, scenes - 1);
    out.push_back(d);
  }
  return out;
}

Outcome structural_oracles() {
  Rng rng(77);
  int align_bad = 0, nms_bad = 0, ap_bad = 0;
  for (int i = 0; i < 200; ++i) {
    const ProposalSet s = random_proposals(rng, 1 + rng.index(8), 3, 1.0);
    const ProposalSet t = random_proposals(rng, 1 + rng.index(8), 3, 1.0);
    const Alignment a = align(s, t);
    align_bad += a.teacher_to_student != nearest_oracle(t, s) || a.student_to_teacher != nearest_oracle(s, t);
  }
  for (int i = 0; i < 200; ++i) {
    const auto dets = random_detections(rng, 1 + rng.index(12), 3, 2);
    nms_bad += nms_indices(dets, 0.25) != nms_oracle(dets, 0.25);
  }
  for (int i = 0; i < 200; ++i) {
    std::vector<bool> seq(rng.index(20));
    std::size_t hits = 0;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      seq[k] = rng.uniform() < 0.5;
      hits += seq[k];
    }
    const std::size_t gt = hits + rng.index(4);
    ap_bad += average_precision(seq, gt) != ap_oracle(seq, gt);
  }
  return {align_bad + nms_bad + ap_bad == 0, "mismatches out of 200 each: align " + std::to_string(align_bad) +
                                                 ", nms " + std::to_string(nms_bad) + ", AP " + std::to_string(ap_bad)};
}

Outcome consistency_identities() {
  Rng rng(91);
  double self_worst = 0.0, shift_worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const ProposalSet a = random_proposals(rng, 1 + rng.index(8), 4);
    const ConsistencyLoss self = total_consistency(a, a, ConsistencyWeights{});
    self_worst = std::max({self_worst, self.center, self.cls, self.size});

    const ProposalSet b = random_proposals(rng, 1 + rng.index(8), 4);
    const Vec3 v{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    auto moved = [&](ProposalSet ps) {
      for (auto& p : ps.proposals) {
        p.center = p.center + v;
        p.seed_xyz = p.seed_xyz + v;
      }
      return ps;
    };
    const ConsistencyLoss before = total_consistency(a, b, ConsistencyWeights{});
    const ConsistencyLoss after = total_consistency(moved(a), moved(b), ConsistencyWeights{});
    shift_worst = std::max({shift_worst, std::abs(before.center - after.center), std::abs(before.cls - after.cls),
                            std::abs(before.size - after.size)});
  }

  // The teacher receives no gradient: after every step it is exactly the
  // EMA of its previous value and the updated student.
  const SessConfig c = tiny_session();
  const DatasetSplit split = tiny_split();
  Rng init(5);
  TrainState s;
  s.student = init_params(c.detector, init);
  s.teacher = init_params(c.detector, init);
  Rng batches(6);
  std::size_t teacher_off = 0;
  for (int step = 0; step < 5; ++step) {
    const ParamVector before = s.teacher;
    const StepSchedule sched{10.0, 0.99, 1e-3, static_cast<std::uint64_t>(100 + step)};
    train_step(s, make_batch(split, c.trainer, batches), c, sched);
    for (std::size_t i = 0; i < before.size(); ++i)
      teacher_off += s.teacher.values[i] != 0.99 * before.values[i] + (1.0 - 0.99) * s.student.values[i];
  }
  const bool ok = self_worst < 1e-12 && shift_worst < 1e-9 && teacher_off == 0;
  return {ok, "max loss on (A, A) " + num(self_worst, 3) + " (< 1e-12), max change under joint translation " +
                  num(shift_worst, 3) + " (< 1e-9), teacher entries deviating from pure EMA " +
                  std::to_string(teacher_off)};
}

Outcome schedules() {
  TrainerConfig tc;
  double ramp_worst = 0.0;
  std::string values;
  for (double t : {0.0, 0.5, 1.0}) {
    const double w = rampup_weight(t * tc.rampup_epochs, tc);
    ramp_worst = std::max(ramp_worst, std::abs(w - 10.0 * std::exp(-5.0 * (1.0 - t) * (1.0 - t))));
    values += (values.empty() ? "" : ", ") + num(w, 5);
  }

  DetectorConfig dc;
  dc.hidden_width = 4;
  double ema_worst = 0.0;
  for (double alpha : {0.99, 0.999}) {
    ParamVector teacher{ParamLayout(dc)}, student{ParamLayout(dc)};
    for (double& x : teacher.values) x = -1.3;
    for (double& x : student.values) x = 0.7;
    for (int step = 1; step <= 100; ++step) {
      ema_update(teacher, student, alpha);
      for (double x : teacher.values)
        ema_worst = std::max(ema_worst, std::abs(std::abs(x - 0.7) - std::pow(alpha, step) * 2.0));
    }
  }

  // In the loop: recover alpha from consecutive teachers; one step per epoch.
  SessConfig c = tiny_session();
  c.trainer.epochs = 4;
  c.trainer.rampup_epochs = 2;
  c.trainer.eval_every = 1;
  DatasetSplit split = tiny_split(12, 0.5);
  split.labeled.resize(2);
  Rng rng(2);
  const ParamVector init = init_params(c.detector, rng);
  std::vector<TrainState> seen;
  train_sess(split, c, init, [&](const TrainState& s) {
    seen.push_back(s);
    return 0.0;
  });
  const double expect[] = {0.99, 0.99, 0.999, 0.999};
  double alpha_worst = seen.size() == 4 ? 0.0 : 1.0;
  ParamVector prev = init;
  for (std::size_t e = 0; e < seen.size() && e < 4; ++e) {
    const ParamVector& t = seen[e].teacher;
    const ParamVector& s = seen[e].student;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double denom = prev.values[i] - s.values[i];
      if (std::abs(denom) < 1e-4) continue;
      alpha_worst = std::max(alpha_worst, std::abs((t.values[i] - s.values[i]) / denom - expect[e]));
    }
    prev = t;
  }
  const bool switch_ok = ema_alpha_at(tc.rampup_epochs - 1, tc) == 0.99 && ema_alpha_at(tc.rampup_epochs, tc) == 0.999;
  const bool ok = ramp_worst < 1e-12 && ema_worst < 1e-12 && alpha_worst < 1e-6 && switch_ok;
  return {ok, "ramp-up at T = 0, 0.5, 1: " + values + " (error " + num(ramp_worst, 2) + "), EMA closed-form error " +
                  num(ema_worst, 2) + " over 100 steps, alpha 0.99 -> 0.999 at the ramp-up boundary (recovered to " +
                  num(alpha_worst, 2) + ")"};
}

// Criteria 6-9 share the default benchmark and one run cache.
struct Benchmark {
  ExperimentConfig config;
  fs::path out;
  RunCache cache;
  double sweep_seconds = 0.0;
  std::vector<std::map<std::string, std::string>> sweep;
};

Benchmark& benchmark(const fs::path& scratch) {
  static Benchmark b;
  static bool ready = false;
  if (ready) return b;
  b.config = ExperimentConfig{};
  b.config.ratio = 0.1;
  b.config.ratios = {0.1};
  b.config.seeds = {0, 1, 2};
  b.out = scratch;
  b.config.out_dir = (scratch / "sweep").string();
  std::ostringstream log;
  const auto t0 = Clock::now();
  cli_sweep(b.config, log, &b.cache);
  b.sweep_seconds = seconds_since(t0);
  b.sweep = read_csv(scratch / "sweep" / "sweep.csv");
  ready = true;
  return b;
}

Outcome inductive_benefit(const fs::path& scratch) {
  Benchmark& b = benchmark(scratch);
  const auto& base = row_where(b.sweep, "mode", "baseline");
  const auto& sess = row_where(b.sweep, "mode", "sess");
  const double mb = cell(base, "ind_map25_mean"), ms = cell(sess, "ind_map25_mean");
  const bool ok = ms > mb && b.sweep_seconds < 600.0;
  return {ok, "ratio 0.1, seeds 0-2, K=" + std::to_string(b.config.scene.class_count()) + ": SESS mean mAP@0.25 " +
                  num(ms) + " vs baseline " + num(mb) + " (must be >), " + num(b.sweep_seconds, 4) +
                  " s for all six runs (< 600 s)"};
}

Outcome transductive_benefit(const fs::path& scratch) {
  Benchmark& b = benchmark(scratch);
  const double mb = cell(row_where(b.sweep, "mode", "baseline"), "trans_map25_mean");
  const double ms = cell(row_where(b.sweep, "mode", "sess"), "trans_map25_mean");
  return {ms >= mb, "unlabeled training split: SESS mean mAP@0.25 " + num(ms) + " vs baseline " + num(mb) + " (must be >=)"};
}

// Not a criterion: the SESS schedule with the consistency weight held at 0,
// i.e. the same number of supervised steps without any consistency signal.
void matched_budget_control(const fs::path& scratch) {
  Benchmark& b = benchmark(scratch);
  std::vector<double> ind, trans;
  for (std::uint64_t seed : b.config.seeds) {
    ExperimentConfig c = b.config;
    c.seed = seed;
    c.mode = TrainMode::kSess;
    c.trainer.consistency_max = 0.0;
    const RunOutcome o = run_experiment(c, load_corpus(c), &b.cache);
    ind.push_back(o.inductive.map_at(0.25));
    if (o.transductive) trans.push_back(o.transductive->map_at(0.25));
  }
  std::cout << "INFO matched-budget control (SESS schedule, consistency weight 0): mean mAP@0.25 inductive "
            << num(mean_of(ind)) << ", transductive " << num(mean_of(trans)) << std::endl;
}

Outcome ablation(const fs::path& scratch) {
  Benchmark& b = benchmark(scratch);
  ExperimentConfig c = b.config;
  c.out_dir = (scratch / "ablate").string();
  std::ostringstream log;
  cli_ablate(c, log, &b.cache);
  const auto cons = read_csv(scratch / "ablate" / "ablation_consistency.csv");
  const auto pert = read_csv(scratch / "ablate" / "ablation_perturbation.csv");
  const auto combos = consistency_ablation_grid();
  const auto variants = perturbation_ablation_grid();

  bool shape = cons.size() == 7 && pert.size() == variants.size();
  for (std::size_t i = 0; shape && i < combos.size(); ++i) {
    std::string name;
    for (const auto& t : combos[i]) name += (name.empty() ? "" : "+") + t;
    shape = cons[i].at("variant") == name && cons[i].at("runs") == "3";
  }
  for (std::size_t i = 0; shape && i < variants.size(); ++i)
    shape = pert[i].at("variant") == variants[i].name && pert[i].at("runs") == "3";

  const double all = cell(row_where(cons, "variant", "center+class+size"), "ind_map25_mean");
  const double size_only = cell(row_where(cons, "variant", "size"), "ind_map25_mean");

  // Every row's seed-0 run, recomputed from its manifest alone.
  RunCache fresh;
  int reproduced = 0, rows = 0;
  for (const char* grid : {"consistency", "perturbation"})
    for (const auto& e : fs::directory_iterator(scratch / "ablate" / grid)) {
      ++rows;
      reproduced += reproduces(e.path() / "seed0", fresh);
    }
  std::string means;
  for (const auto& r : cons) means += (means.empty() ? "" : ", ") + r.at("variant") + " " + num(cell(r, "ind_map25_mean"));
  const bool ok = shape && all >= size_only && reproduced == rows && rows == 7 + static_cast<int>(variants.size());
  return {ok, std::string(shape ? "7-row consistency grid and " : "MALFORMED grids; ") + std::to_string(pert.size()) +
                  "-row perturbation grid, 3 seeds per row; all three losses " + num(all) + " vs size only " +
                  num(size_only) + " (must be >=); " + std::to_string(reproduced) + "/" + std::to_string(rows) +
                  " rows reproduced bit-exactly from their manifests; row means " + means};
}

Outcome determinism(const fs::path& scratch) {
  Benchmark& b = benchmark(scratch);
  // Rerun from the manifest with a different worker count and compare the
  // files written for the run, not only the metric log.
  int same = 0, total = 0;
  for (const char* name : {"r0.1_s1_baseline", "r0.1_s1_sess"}) {
    const fs::path dir = scratch / "sweep" / "runs" / name;
    ExperimentConfig c = load_config_file(dir / "manifest.json");
    c.trainer.threads = 3;
    const Corpus corpus = load_corpus(c);
    const RunOutcome o = run_experiment(c, corpus);
    const fs::path again = scratch / "rerun" / name;
    write_run(again, c, corpus, o, "sweep");
    for (const char* f : {"metrics.csv", "checkpoint.txt"}) {
      ++total;
      same += slurp(dir / f) == slurp(again / f);
    }
  }
  (void)b;
  return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                             " metric logs and checkpoints bit-identical after rerunning from the manifest with 3 "
                             "worker threads"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path scratch = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "sess_forge_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  report(1, "gradient oracle", gradient_oracle);
  report(2, "IoU oracle", iou_oracle);
  report(3, "alignment, NMS and AP oracles", structural_oracles);
  report(4, "consistency identities", consistency_identities);
  report(5, "schedules", schedules);
  report(6, "inductive semi-supervised benefit", [&] { return inductive_benefit(scratch); });
  report(7, "transductive semi-supervised benefit", [&] { return transductive_benefit(scratch); });
  try {
    matched_budget_control(scratch);
  } catch (const std::exception& e) {
    std::cout << "INFO matched-budget control failed: " << e.what() << std::endl;
  }
  report(8, "ablation grids", [&] { return ablation(scratch); });
  report(9, "determinism", [&] { return determinism(scratch); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
