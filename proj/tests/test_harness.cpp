// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "sess/harness.hpp"

using namespace sess;
using namespace sess::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sess_forge_test_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

// Every regular file below `dir`, relative path -> contents.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("ablation grids") {
  const auto combos = consistency_ablation_grid();
  REQUIRE(combos.size() == 7);
  CHECK(combos.front() == std::vector<std::string>{"center"});
  CHECK(combos.back() == std::vector<std::string>{"center", "class", "size"});
  std::set<std::vector<std::string>> unique(combos.begin(), combos.end());
  CHECK(unique.size() == 7);

  const auto variants = perturbation_ablation_grid();
  REQUIRE(variants.size() >= 3);
  CHECK(variants.front().name == "full");
  CHECK(variants.front().disabled.empty());
  CHECK(variants.back().name == "none");
  for (const auto& v : variants) {
    ExperimentConfig c;
    c.disable_perturbation = v.disabled;
    CHECK_NOTHROW(c.validate());
  }
}

TEST_CASE("mean and sample standard deviation") {
  CHECK(mean_of({1.0, 2.0, 3.0}) == 2.0);
  CHECK(sample_std({1.0, 2.0, 3.0}) == doctest::Approx(1.0));
  CHECK(sample_std({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}) == doctest::Approx(std::sqrt(32.0 / 7.0)));
  CHECK(sample_std({5.0}) == 0.0);
  CHECK(sample_std({}) == 0.0);
}

TEST_CASE("eval selection parsing") {
  CHECK(parse_eval_selection("both") == EvalSelection::kBoth);
  CHECK(parse_eval_selection("inductive") == EvalSelection::kInductive);
  CHECK_THROWS_AS(parse_eval_selection("sideways"), ConfigError);
}

TEST_CASE("run split is seeded and disjoint") {
  const ExperimentConfig c = tiny_experiment();
  const Corpus corpus = generate_corpus(c);
  CHECK(corpus.pool.size() == 16);
  CHECK(corpus.validation.size() == 4);
  const DatasetSplit a = make_run_split(corpus, 0.25, 3), b = make_run_split(corpus, 0.25, 3);
  CHECK(a == b);
  CHECK(a.labeled.size() == 4);
  CHECK(a.labeled.size() + a.unlabeled.size() == corpus.pool.size());
  for (const auto& l : a.labeled)
    for (const auto& u : a.unlabeled) CHECK(l.scene_id != u.scene_id);
}

TEST_CASE("a run reproduces from its manifest, at any thread count") {
  ExperimentConfig c = tiny_experiment();
  c.seed = 1;
  const Corpus corpus = generate_corpus(c);
  const RunOutcome first = run_experiment(c, corpus);
  CHECK(first.metrics.size() == static_cast<std::size_t>(c.trainer.pretrain_epochs + c.trainer.epochs));
  CHECK(first.transductive.has_value());

  const fs::path dir = scratch("manifest");
  fs::create_directories(dir);
  { std::ofstream(dir / "manifest.json") << format_run_manifest(c, corpus, first, "train"); }
  ExperimentConfig again = load_config_file(dir / "manifest.json");
  again.trainer.threads = 3;
  const RunOutcome second = run_experiment(again, generate_corpus(again));
  CHECK(second.state == first.state);
  CHECK(format_metric_log(second.metrics) == format_metric_log(first.metrics));
  CHECK(second.inductive.ap == first.inductive.ap);
  CHECK(second.labeled_ids == first.labeled_ids);
  fs::remove_all(dir);
}

TEST_CASE("the cache returns the same outcome") {
  const ExperimentConfig c = tiny_experiment();
  const Corpus corpus = generate_corpus(c);
  RunCache cache;
  const RunOutcome a = run_experiment(c, corpus, &cache);
  const RunOutcome b = run_experiment(c, corpus, &cache);
  CHECK(a.state == b.state);
  CHECK(run_experiment(c, corpus).state == a.state);
}

TEST_CASE("baseline training never reads unlabeled scenes") {
  ExperimentConfig c = tiny_experiment();
  c.mode = TrainMode::kBaseline;
  const Corpus corpus = generate_corpus(c);
  const RunOutcome clean = run_experiment(c, corpus);

  // Scramble the points of every scene outside the labeled split.
  Corpus scrambled = corpus;
  Rng rng(99);
  for (auto& s : scrambled.pool) {
    if (std::find(clean.labeled_ids.begin(), clean.labeled_ids.end(), s.scene_id) != clean.labeled_ids.end()) continue;
    for (auto& p : s.cloud.points) p = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 1)};
  }
  const RunOutcome dirty = run_experiment(c, scrambled);
  CHECK(dirty.labeled_ids == clean.labeled_ids);
  CHECK(dirty.state == clean.state);
  CHECK(dirty.inductive.ap == clean.inductive.ap);

  // SESS does read them.
  c.mode = TrainMode::kSess;
  CHECK_FALSE(run_experiment(c, scrambled).state == run_experiment(c, corpus).state);
}

TEST_CASE("ratio 1 leaves no unlabeled scenes and skips the transductive report") {
  ExperimentConfig c = tiny_experiment();
  c.ratio = 1.0;
  const RunOutcome o = run_experiment(c, generate_corpus(c));
  CHECK(o.unlabeled_ids.empty());
  CHECK_FALSE(o.transductive.has_value());
}

TEST_CASE("generate is deterministic and load_corpus reads it back") {
  ExperimentConfig c = tiny_experiment();
  std::ostringstream log;
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  c.out_dir = a.string();
  REQUIRE(cli_generate(c, log) == 0);
  c.out_dir = b.string();
  REQUIRE(cli_generate(c, log) == 0);
  CHECK(tree(a) == tree(b));

  ExperimentConfig from_disk = c;
  from_disk.data_dir = a.string();
  const Corpus loaded = load_corpus(from_disk);
  const Corpus generated = generate_corpus(c);
  CHECK(loaded.pool == generated.pool);
  CHECK(loaded.validation == generated.validation);
  CHECK(loaded.class_count == generated.class_count);

  from_disk.data_dir = (a / "missing").string();
  CHECK_THROWS_AS(load_corpus(from_disk), ConfigError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("train writes a run directory and eval checks the class count") {
  ExperimentConfig c = tiny_experiment();
  std::ostringstream log;
  const fs::path run = scratch("train");
  c.out_dir = run.string();
  REQUIRE(cli_train(c, log) == 0);
  for (const char* f : {"checkpoint.txt", "student_checkpoint.txt", "teacher_checkpoint.txt", "metrics.csv", "manifest.json"})
    CHECK(fs::exists(run / f));
  CHECK(line_count(slurp(run / "metrics.csv")) == 1 + static_cast<std::size_t>(c.trainer.pretrain_epochs + c.trainer.epochs));

  ExperimentConfig e = load_config_file(run / "manifest.json");
  e.out_dir = scratch("eval").string();
  REQUIRE(cli_eval(e, run, EvalSelection::kBoth, log) == 0);
  CHECK(fs::exists(fs::path(e.out_dir) / "eval_inductive.csv"));
  CHECK(fs::exists(fs::path(e.out_dir) / "eval_transductive.csv"));
  CHECK(fs::exists(fs::path(e.out_dir) / "eval.json"));

  ExperimentConfig wrong = e;
  wrong.scene.classes.resize(2);
  CHECK_THROWS_AS(cli_eval(wrong, run, EvalSelection::kInductive, log), ConfigError);
  CHECK_THROWS_AS(cli_eval(e, run / "nothing_here.txt", EvalSelection::kInductive, log), ConfigError);
  fs::remove_all(run);
  fs::remove_all(e.out_dir);
}

TEST_CASE("sweep writes one row per ratio and mode and warns on a single seed") {
  ExperimentConfig c = tiny_experiment();
  c.trainer.pretrain_epochs = 1;
  c.trainer.epochs = 1;
  c.trainer.rampup_epochs = 1;
  c.ratios = {0.25, 0.5, 1.0};
  c.seeds = {0};
  const fs::path out = scratch("sweep");
  c.out_dir = out.string();
  std::ostringstream log;
  REQUIRE(cli_sweep(c, log) == 0);
  CHECK(log.str().find("warning: single seed") != std::string::npos);
  const std::string table = slurp(out / "sweep.csv");
  CHECK(line_count(table) == 1 + 6);
  CHECK(line_count(slurp(out / "runs.csv")) == 1 + 6);
  CHECK(fs::exists(out / "runs" / "r0.25_s0_sess" / "manifest.json"));
  fs::remove_all(out);
}
