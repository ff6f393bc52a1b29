// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sess {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRunFormat = "sess-forge-run/1";
constexpr std::uint64_t kSplitKey = 0x5911;

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + file.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

std::string ratio_tag(double r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

std::vector<std::int64_t> ids_of(const std::vector<LabeledScene>& scenes) {
  std::vector<std::int64_t> ids;
  ids.reserve(scenes.size());
  for (const auto& s : scenes) ids.push_back(s.scene_id);
  return ids;
}

/// Config with everything that cannot change the outcome of a run cleared.
ExperimentConfig outcome_relevant(ExperimentConfig c) {
  c.out_dir.clear();
  c.ratios.clear();
  c.seeds.clear();
  c.trainer.threads = 1;
  return c;
}

/// Further reduced to what pre-training depends on.
ExperimentConfig pretrain_relevant(ExperimentConfig c) {
  c = outcome_relevant(c);
  const ExperimentConfig defaults;
  c.mode = TrainMode::kSess;
  c.consistency = defaults.consistency;
  c.disable_consistency.clear();
  c.trainer.epochs = 0;
  c.trainer.rampup_epochs = 0;
  c.trainer.consistency_max = defaults.trainer.consistency_max;
  c.trainer.ema_alpha_rampup = defaults.trainer.ema_alpha_rampup;
  c.trainer.ema_alpha_main = defaults.trainer.ema_alpha_main;
  c.trainer.unlabeled_batch = 0;
  c.trainer.adam.learning_rate = defaults.trainer.adam.learning_rate;
  c.trainer.adam.decay_epoch = defaults.trainer.adam.decay_epoch;
  c.trainer.adam.decay_factor = defaults.trainer.adam.decay_factor;
  return c;
}

json report_summary(const EvalReport& r) {
  json j = {{"mode", to_string(r.mode)}};
  for (std::size_t t = 0; t < r.iou_thresholds.size(); ++t) {
    std::ostringstream key;
    key << "map@" << r.iou_thresholds[t];
    j[key.str()] = r.map[t];
  }
  j["per_class_ap"] = r.ap;
  return j;
}

double map_or_nan(const EvalReport& r, double thr) {
  try {
    return r.map_at(thr);
  } catch (const std::exception&) {
    return std::nan("");
  }
}

struct Aggregate {
  std::vector<double> ind25, ind50, tr25, tr50;
  void add(const RunOutcome& o) {
    ind25.push_back(map_or_nan(o.inductive, 0.25));
    ind50.push_back(map_or_nan(o.inductive, 0.5));
    if (o.transductive) {
      tr25.push_back(map_or_nan(*o.transductive, 0.25));
      tr50.push_back(map_or_nan(*o.transductive, 0.5));
    }
  }
};

std::string mean_cell(const std::vector<double>& v) { return v.empty() ? "" : fmt(mean_of(v)); }
std::string std_cell(const std::vector<double>& v) { return v.empty() ? "" : fmt(sample_std(v)); }

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

/// One (config, seed) cell: run, write its directory, return the outcome.
RunOutcome run_cell(const ExperimentConfig& config, const Corpus& corpus, RunCache& cache, const fs::path& dir,
                    const std::string& command, std::ostream& log) {
  log << "[" << command << "] " << dir.string() << " ... " << std::flush;
  RunOutcome o = run_experiment(config, corpus, &cache);
  make_dir(dir);
  write_run(dir, config, corpus, o, command);
  std::vector<EvalReport> reports{o.inductive};
  if (o.transductive) reports.push_back(*o.transductive);
  write_eval_reports(dir, reports);
  log << "mAP@0.25 " << fmt(map_or_nan(o.inductive, 0.25)) << '\n';
  return o;
}

}  // namespace

// ---- corpus and splits ----

Corpus generate_corpus(const ExperimentConfig& config) {
  try {
    config.scene.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid scene spec: ") + e.what());
  }
  if (config.train_scenes < 1 || config.val_scenes < 1) throw ConfigError("train_scenes and val_scenes must be >= 1");
  Corpus c;
  c.class_count = config.scene.class_count();
  c.seed = config.data_seed;
  const auto n_train = static_cast<std::size_t>(config.train_scenes);
  c.pool = generate_scenes(config.scene, config.data_seed, 0, n_train);
  c.validation = generate_scenes(config.scene, config.data_seed, config.train_scenes,
                                 static_cast<std::size_t>(config.val_scenes));
  return c;
}

Corpus load_corpus(const ExperimentConfig& config) {
  if (config.data_dir.empty()) return generate_corpus(config);
  const fs::path dir(config.data_dir);
  if (!fs::exists(dir / "manifest.json")) throw ConfigError("no dataset at " + dir.string());
  DatasetSplit d = load_dataset(dir);
  Corpus c;
  c.class_count = d.class_count;
  c.seed = d.seed;
  c.pool = std::move(d.labeled);
  c.pool.insert(c.pool.end(), std::make_move_iterator(d.unlabeled.begin()), std::make_move_iterator(d.unlabeled.end()));
  std::sort(c.pool.begin(), c.pool.end(), [](const auto& a, const auto& b) { return a.scene_id < b.scene_id; });
  c.validation = std::move(d.validation);
  if (c.pool.empty() || c.validation.empty()) throw ConfigError("dataset " + dir.string() + " has an empty split");
  return c;
}

DatasetSplit make_run_split(const Corpus& corpus, double ratio, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {kSplitKey});
  DatasetSplit split = split_dataset(corpus.pool, ratio, corpus.class_count, rng);
  split.validation = corpus.validation;
  return split;
}

SessConfig run_config(const ExperimentConfig& config, const Corpus& corpus) {
  SessConfig sc = config.resolved();
  sc.detector.class_count = corpus.class_count;
  if (const char* env = std::getenv("SESS_FORGE_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("SESS_FORGE_THREADS must be a positive integer");
    sc.trainer.threads = static_cast<int>(std::min<long>(n, 256));
  }
  return sc;
}

// ---- runs ----

const ParamVector& RunOutcome::inference_params(const TrainerConfig& trainer) const {
  return trainer.infer_with_teacher ? state.teacher : state.student;
}

std::optional<TrainResult> RunCache::find_pretrain(const std::string& key) const {
  const auto it = pretrain_.find(key);
  if (it == pretrain_.end()) return std::nullopt;
  return it->second;
}

void RunCache::store_pretrain(const std::string& key, const TrainResult& result) { pretrain_[key] = result; }

std::optional<RunOutcome> RunCache::find_run(const std::string& key) const {
  const auto it = runs_.find(key);
  if (it == runs_.end()) return std::nullopt;
  return it->second;
}

void RunCache::store_run(const std::string& key, const RunOutcome& outcome) { runs_[key] = outcome; }

RunOutcome run_experiment(const ExperimentConfig& config, const Corpus& corpus, RunCache* cache) {
  config.validate();
  const std::string run_key = config_to_json(outcome_relevant(config));
  if (cache != nullptr)
    if (auto hit = cache->find_run(run_key)) return *hit;

  const SessConfig sc = run_config(config, corpus);
  DatasetSplit split = make_run_split(corpus, config.ratio, config.seed);

  RunOutcome out;
  out.mode = config.mode;
  out.labeled_ids = ids_of(split.labeled);
  out.unlabeled_ids = ids_of(split.unlabeled);

  const bool teacher_infers = sc.trainer.infer_with_teacher;
  const Validator validator = [&](const TrainState& s) {
    const ParamVector& p = teacher_infers ? s.teacher : s.student;
    return evaluate(p, sc.detector, split.validation, config.eval, EvalMode::kInductive).map_at(0.25);
  };

  // Pre-training never sees the unlabeled pool.
  DatasetSplit labeled_only;
  labeled_only.class_count = split.class_count;
  labeled_only.seed = split.seed;
  labeled_only.labeled = split.labeled;

  const std::string pre_key = config_to_json(pretrain_relevant(config));
  std::optional<TrainResult> pre;
  if (cache != nullptr) pre = cache->find_pretrain(pre_key);
  if (!pre) {
    pre = pretrain(labeled_only, sc, validator);
    if (cache != nullptr) cache->store_pretrain(pre_key, *pre);
  }
  out.pretrain_epochs = pre->pretrain_log.size();
  out.metrics = pre->pretrain_log;
  out.state = pre->state;

  if (config.mode == TrainMode::kSess && sc.trainer.epochs > 0) {
    SessConfig phase = sc;
    if (split.unlabeled.empty()) phase.trainer.unlabeled_batch = 0;
    TrainResult r = train_sess(split, phase, pre->state.student, validator);
    const int offset = static_cast<int>(out.pretrain_epochs);
    for (auto m : r.log) {
      m.epoch += offset;
      out.metrics.push_back(m);
    }
    out.state = std::move(r.state);
  }

  const ParamVector& params = out.inference_params(sc.trainer);
  out.inductive = evaluate(params, sc.detector, split.validation, config.eval, EvalMode::kInductive);
  if (!split.unlabeled.empty())
    out.transductive = evaluate(params, sc.detector, split.unlabeled, config.eval, EvalMode::kTransductive);

  if (cache != nullptr) cache->store_run(run_key, out);
  return out;
}

std::string format_run_manifest(const ExperimentConfig& config, const Corpus& corpus, const RunOutcome& outcome,
                                const std::string& command) {
  json results = {{"inductive", report_summary(outcome.inductive)}};
  if (outcome.transductive) results["transductive"] = report_summary(*outcome.transductive);
  const json m = {
      {"format", kRunFormat},
      {"command", command},
      {"mode", to_string(config.mode)},
      {"seed", config.seed},
      {"ratio", config.ratio},
      {"flags", {{"disable_perturbation", config.disable_perturbation},
                 {"disable_consistency", config.disable_consistency}}},
      {"dataset", {{"dir", config.data_dir},
                   {"seed", corpus.seed},
                   {"class_count", corpus.class_count},
                   {"pool_scenes", corpus.pool.size()},
                   {"validation_scenes", corpus.validation.size()}}},
      {"split", {{"labeled", outcome.labeled_ids}, {"unlabeled", outcome.unlabeled_ids}}},
      {"pretrain_epochs", outcome.pretrain_epochs},
      {"results", results},
      {"config", json::parse(config_to_json(config))},
  };
  return m.dump(2) + "\n";
}

void write_run(const fs::path& dir, const ExperimentConfig& config, const Corpus& corpus, const RunOutcome& outcome,
               const std::string& command) {
  make_dir(dir);
  const SessConfig sc = run_config(config, corpus);
  save_checkpoint({sc.detector, outcome.inference_params(sc.trainer)}, dir / "checkpoint.txt");
  if (outcome.mode == TrainMode::kSess) {
    save_checkpoint({sc.detector, outcome.state.student}, dir / "student_checkpoint.txt");
    save_checkpoint({sc.detector, outcome.state.teacher}, dir / "teacher_checkpoint.txt");
  }
  write_text(dir / "metrics.csv", format_metric_log(outcome.metrics));
  write_text(dir / "manifest.json", format_run_manifest(config, corpus, outcome, command));
}

void write_eval_reports(const fs::path& dir, const std::vector<EvalReport>& reports) {
  make_dir(dir);
  json all = json::array();
  for (const auto& r : reports) {
    write_text(dir / ("eval_" + to_string(r.mode) + ".csv"), format_report_csv(r));
    all.push_back(report_summary(r));
  }
  write_text(dir / "eval.json", all.dump(2) + "\n");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

EvalSelection parse_eval_selection(const std::string& text) {
  if (text == "inductive") return EvalSelection::kInductive;
  if (text == "transductive") return EvalSelection::kTransductive;
  if (text == "both") return EvalSelection::kBoth;
  throw ConfigError("eval mode must be inductive, transductive or both (got '" + text + "')");
}

std::vector<std::vector<std::string>> consistency_ablation_grid() {
  return {{"center"}, {"class"}, {"size"}, {"center", "class"}, {"center", "size"}, {"class", "size"},
          {"center", "class", "size"}};
}

std::vector<PerturbationVariant> perturbation_ablation_grid() {
  return {{"full", {}},
          {"no-flip-x", {"flip-x"}},
          {"no-flip-y", {"flip-y"}},
          {"no-rotation", {"rotation"}},
          {"no-scaling", {"scaling"}},
          {"no-subsample-independence", {"subsample-independence"}},
          {"none", {"flip-x", "flip-y", "rotation", "scaling", "subsample-independence"}}};
}

// ---- subcommands ----

int cli_generate(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const Corpus c = generate_corpus(config);
  Rng rng = Rng::derive(config.data_seed, {kSplitKey});
  DatasetSplit split = split_dataset(c.pool, config.ratio, c.class_count, rng);
  split.seed = config.data_seed;
  split.validation = c.validation;
  const fs::path dir(config.out_dir);
  make_dir(dir);
  try {
    save_dataset(split, dir, &config.scene);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  log << "wrote " << c.pool.size() << " train + " << c.validation.size() << " val scenes to " << dir.string() << '\n';
  return 0;
}

int cli_train(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const Corpus corpus = load_corpus(config);
  const fs::path dir(config.out_dir);
  make_dir(dir);
  RunCache cache;
  run_cell(config, corpus, cache, dir, "train", log);
  return 0;
}

int cli_eval(const ExperimentConfig& config, const fs::path& checkpoint, EvalSelection selection, std::ostream& log) {
  config.validate();
  const fs::path file = fs::is_directory(checkpoint) ? checkpoint / "checkpoint.txt" : checkpoint;
  if (!fs::exists(file)) throw ConfigError("no checkpoint at " + file.string());
  const Checkpoint ckpt = load_checkpoint(file);
  const Corpus corpus = load_corpus(config);
  if (ckpt.config.class_count != corpus.class_count)
    throw ConfigError("checkpoint has " + std::to_string(ckpt.config.class_count) + " classes, dataset has " +
                      std::to_string(corpus.class_count));
  std::vector<EvalReport> reports;
  if (selection != EvalSelection::kTransductive)
    reports.push_back(evaluate(ckpt.params, ckpt.config, corpus.validation, config.eval, EvalMode::kInductive));
  if (selection != EvalSelection::kInductive) {
    const DatasetSplit split = make_run_split(corpus, config.ratio, config.seed);
    if (split.unlabeled.empty()) {
      if (selection == EvalSelection::kTransductive) throw ConfigError("the run's unlabeled split is empty");
      log << "warning: unlabeled split is empty, transductive report skipped\n";
    } else {
      reports.push_back(evaluate(ckpt.params, ckpt.config, split.unlabeled, config.eval, EvalMode::kTransductive));
    }
  }
  write_eval_reports(fs::path(config.out_dir), reports);
  for (const auto& r : reports) {
    log << to_string(r.mode);
    for (std::size_t t = 0; t < r.iou_thresholds.size(); ++t)
      log << "  mAP@" << r.iou_thresholds[t] << " " << fmt(r.map[t]);
    log << '\n';
  }
  return 0;
}

int cli_sweep(const ExperimentConfig& config, std::ostream& log, RunCache* shared) {
  config.validate();
  if (config.seeds.size() < 2) log << "warning: single seed per cell, standard deviations reported as 0\n";
  const Corpus corpus = load_corpus(config);
  const fs::path out(config.out_dir);
  make_dir(out);
  RunCache local;
  RunCache& cache = shared != nullptr ? *shared : local;

  std::ostringstream runs;
  runs << "ratio,seed,mode,ind_map25,ind_map50,trans_map25,trans_map50\n";
  std::ostringstream table;
  table << "ratio,mode,runs,ind_map25_mean,ind_map25_std,ind_map50_mean,ind_map50_std,trans_map25_mean,"
           "trans_map25_std,trans_map50_mean,trans_map50_std,improv_pct\n";

  for (double ratio : config.ratios) {
    Aggregate agg[2];
    for (std::uint64_t seed : config.seeds) {
      for (TrainMode mode : {TrainMode::kBaseline, TrainMode::kSess}) {
        ExperimentConfig c = config;
        c.ratio = ratio;
        c.seed = seed;
        c.mode = mode;
        const fs::path dir = out / "runs" / ("r" + ratio_tag(ratio) + "_s" + std::to_string(seed) + "_" + to_string(mode));
        const RunOutcome o = run_cell(c, corpus, cache, dir, "sweep", log);
        agg[mode == TrainMode::kSess].add(o);
        runs << ratio_tag(ratio) << ',' << seed << ',' << to_string(mode) << ',' << fmt(map_or_nan(o.inductive, 0.25))
             << ',' << fmt(map_or_nan(o.inductive, 0.5)) << ','
             << (o.transductive ? fmt(map_or_nan(*o.transductive, 0.25)) : "") << ','
             << (o.transductive ? fmt(map_or_nan(*o.transductive, 0.5)) : "") << '\n';
      }
    }
    const double base = mean_of(agg[0].ind25);
    for (int m = 0; m < 2; ++m) {
      const Aggregate& a = agg[m];
      std::string improv;
      if (m == 1 && base > 0.0) improv = fmt((mean_of(a.ind25) - base) / base * 100.0);
      table << ratio_tag(ratio) << ',' << (m ? "sess" : "baseline") << ',' << a.ind25.size() << ','
            << mean_cell(a.ind25) << ',' << std_cell(a.ind25) << ',' << mean_cell(a.ind50) << ',' << std_cell(a.ind50)
            << ',' << mean_cell(a.tr25) << ',' << std_cell(a.tr25) << ',' << mean_cell(a.tr50) << ','
            << std_cell(a.tr50) << ',' << improv << '\n';
    }
  }
  write_text(out / "runs.csv", runs.str());
  write_text(out / "sweep.csv", table.str());
  log << "wrote " << (out / "sweep.csv").string() << '\n';
  return 0;
}

int cli_ablate(const ExperimentConfig& config, std::ostream& log, RunCache* shared) {
  config.validate();
  if (config.seeds.size() < 2) log << "warning: single seed per row, standard deviations reported as 0\n";
  const Corpus corpus = load_corpus(config);
  const fs::path out(config.out_dir);
  make_dir(out);
  RunCache local;
  RunCache& cache = shared != nullptr ? *shared : local;
  const std::string header =
      "runs,ind_map25_mean,ind_map25_std,ind_map50_mean,ind_map50_std,trans_map25_mean,trans_map25_std\n";
  auto row_cells = [](const Aggregate& a) {
    return std::to_string(a.ind25.size()) + ',' + mean_cell(a.ind25) + ',' + std_cell(a.ind25) + ',' +
           mean_cell(a.ind50) + ',' + std_cell(a.ind50) + ',' + mean_cell(a.tr25) + ',' + std_cell(a.tr25) + '\n';
  };
  auto run_seeds = [&](ExperimentConfig c, const fs::path& dir) {
    Aggregate a;
    for (std::uint64_t seed : config.seeds) {
      c.seed = seed;
      a.add(run_cell(c, corpus, cache, dir / ("seed" + std::to_string(seed)), "ablate", log));
    }
    return a;
  };

  ExperimentConfig base = config;
  base.mode = TrainMode::kSess;

  std::ostringstream cons;
  cons << "variant,center,class,size," << header;
  for (const auto& on : consistency_ablation_grid()) {
    ExperimentConfig c = base;
    c.disable_perturbation.clear();
    c.disable_consistency.clear();
    for (const char* term : {"center", "class", "size"})
      if (std::find(on.begin(), on.end(), term) == on.end()) c.disable_consistency.emplace_back(term);
    const std::string name = join(on, "+");
    const Aggregate a = run_seeds(c, out / "consistency" / name);
    auto flag = [&](const char* t) { return std::find(on.begin(), on.end(), t) != on.end() ? "1" : "0"; };
    cons << name << ',' << flag("center") << ',' << flag("class") << ',' << flag("size") << ',' << row_cells(a);
  }
  write_text(out / "ablation_consistency.csv", cons.str());

  std::ostringstream pert;
  pert << "variant,disabled," << header;
  for (const auto& v : perturbation_ablation_grid()) {
    ExperimentConfig c = base;
    c.disable_consistency.clear();
    c.disable_perturbation = v.disabled;
    const Aggregate a = run_seeds(c, out / "perturbation" / v.name);
    pert << v.name << ',' << join(v.disabled, "+") << ',' << row_cells(a);
  }
  write_text(out / "ablation_perturbation.csv", pert.str());
  log << "wrote " << (out / "ablation_consistency.csv").string() << " and "
      << (out / "ablation_perturbation.csv").string() << '\n';
  return 0;
}

}  // namespace sess
