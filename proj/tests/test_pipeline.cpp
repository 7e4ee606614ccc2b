// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "trajlab/backend.hpp"
#include "trajlab/csv.hpp"
#include "trajlab/error.hpp"
#include "trajlab/pipeline.hpp"

using namespace trajlab;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = TRAJLAB_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string smoke_text() { return slurp(kSource / "data" / "configs" / "smoke.ini"); }

ExperimentConfig smoke(const fs::path& out) {
  auto cfg = parse_config(smoke_text(), kSource / "data" / "configs");
  cfg.out_dir = out;
  return cfg;
}

std::string error_message(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  FAIL("expected ConfigError");
  return {};
}

fs::path fresh_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

// Shared completed run; the stages take about a second.
const RunManifest& completed_run() {
  static const RunManifest manifest = [] {
    const auto cfg = smoke(fresh_dir("trajlab_pipeline_run"));
    return run(cfg);
  }();
  return manifest;
}

}  // namespace

TEST_CASE("smoke config parses with paths relative to the file") {
  const auto cfg = smoke("x");
  CHECK(cfg.orders == std::vector<std::size_t>{1, 2, 3});
  CHECK(cfg.shards == 4);
  CHECK(cfg.lambdas.size() == 5);
  CHECK(cfg.lambdas[0].lambda_s == 1.0);
  CHECK(cfg.lambdas[0].lambda_l == -1.0);
  CHECK(cfg.tasks.size() == 4);
  CHECK(fs::exists(cfg.train_path));
  CHECK(cfg.exemplar_template == "{stem} {answer}\n");
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("validation names the offending field") {
  auto cfg = smoke("x");
  cfg.lambdas[2].lambda_s = 1.5;
  CHECK(error_message([&] { cfg.validate(); }).find("decode.lambdas[2].lambda_s") != std::string::npos);

  auto missing = smoke("x");
  missing.tasks.push_back("/nonexistent/task.json");
  CHECK(error_message([&] { missing.validate(); }).find("icl.tasks[4]") != std::string::npos);

  auto small = smoke("x");
  small.small_order = 7;
  CHECK(error_message([&] { small.validate(); }).find("decode.small_order") != std::string::npos);
}

TEST_CASE("parse errors") {
  const auto base = kSource / "data" / "configs";
  CHECK(error_message([&] { parse_config("[corpus]\ntrain=a\nvalid=b\ncolour=red\n", base); })
            .find("corpus.colour") != std::string::npos);
  CHECK(error_message([&] { parse_config("[corpus]\ntrain=a\nvalid=b\n[decode]\nlambdas=1:x\n", base); })
            .find("decode.lambdas[0].lambda_l") != std::string::npos);
  CHECK(error_message([&] { parse_config("[corpus]\ntrain=a\n", base); }).find("corpus.valid") !=
        std::string::npos);
}

TEST_CASE("environment overrides") {
  setenv("TRAJLAB_DECODE_TOP_P", "0.5", 1);
  setenv("TRAJLAB_RUN_SEED", "99", 1);
  const auto cfg = smoke("x");
  unsetenv("TRAJLAB_DECODE_TOP_P");
  unsetenv("TRAJLAB_RUN_SEED");
  CHECK(cfg.top_p == 0.5);
  CHECK(cfg.seed == 99);
}

TEST_CASE("config hash ignores key order and output location but not settings") {
  const auto a = smoke("one");
  // Same content, sections and keys reversed.
  std::istringstream in(smoke_text());
  std::vector<std::vector<std::string>> sections;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == ';') continue;
    if (line[0] == '[') sections.push_back({});
    sections.back().push_back(line);
  }
  std::string reordered;
  for (auto it = sections.rbegin(); it != sections.rend(); ++it) {
    reordered += it->front() + "\n";
    for (auto k = it->rbegin(); k + 1 != it->rend(); ++k) reordered += *k + "\n";
  }
  auto b = parse_config(reordered, kSource / "data" / "configs");
  b.out_dir = "two";
  CHECK(a.hash() == b.hash());
  b.seed += 1;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("run produces every stage and report bundles the plot data") {
  const auto& m = completed_run();
  REQUIRE(m.stages.size() == stage_names().size());
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    CHECK(m.stages[i].name == stage_names()[i]);
    CHECK_FALSE(m.stages[i].outputs.empty());
  }
  const auto files = report(m);
  CHECK(files.size() == 9);
  for (const auto& f : files) CHECK(fs::exists(m.out_dir / f.path));
  CHECK(fs::exists(m.out_dir / "report" / "index.json"));

  const auto loaded = RunManifest::load(m.out_dir);
  CHECK(loaded.config_hash == m.config_hash);
  CHECK(loaded.stages.size() == m.stages.size());
}

TEST_CASE("report cardinalities") {
  const auto& m = completed_run();
  const auto cfg = smoke(m.out_dir);
  const auto by_ckpt = read_csv(m.out_dir / "icl" / "accuracy_by_checkpoint.csv");
  CHECK(by_ckpt.size() - 1 == cfg.orders.size() * cfg.shards);
  const auto finals = read_csv(m.out_dir / "sweep" / "generated_final_ppl.csv");
  CHECK(finals.size() - 1 == cfg.lambdas.size() * cfg.strategies.size() * cfg.orders.size());
  const auto ppl_rows = read_csv(m.out_dir / "dump" / "validation_ppl.csv");
  CHECK(ppl_rows.size() - 1 == cfg.orders.size() * cfg.shards);
}

TEST_CASE("validation_ppl agrees everywhere with the perplexity op") {
  const auto& m = completed_run();
  const auto cfg = smoke(m.out_dir);
  Vocabulary vocab = Vocabulary::from_json(nlohmann::json::parse(slurp(m.out_dir / "train" / "vocab.json")));
  const auto valid = load_corpus(cfg.valid_path, vocab, CorpusOptions{cfg.max_len, "valid"});
  std::map<std::pair<std::string, std::string>, std::string> truth;
  for (std::size_t order : cfg.orders) {
    const auto id = "ngram-o" + std::to_string(order);
    const auto model = NgramSeries::load(m.out_dir / "train" / "models" / (id + ".json"));
    for (std::size_t c = 0; c < model.num_checkpoints(); ++c) {
      truth[{id, std::to_string(c)}] = format_double(corpus_perplexity(model, c, valid));
    }
  }
  struct Source {
    const char* file;
    std::size_t model_col, ckpt_col, ppl_col;
  };
  const Source sources[] = {
      {"dump/validation_ppl.csv", 0, 2, 8},
      {"trends/subset_trajectories.csv", 5, 6, 10},
      {"sweep/generated_trajectories.csv", 1, 2, 6},
      {"icl/results.csv", 1, 2, 6},
      {"icl/accuracy_by_checkpoint.csv", 0, 1, 4},
  };
  for (const auto& s : sources) {
    const auto rows = read_csv(m.out_dir / s.file);
    REQUIRE(rows.size() > 1);
    CAPTURE(s.file);
    CHECK(rows[0][s.ppl_col] == "validation_ppl");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      CHECK(rows[r][s.ppl_col] == truth.at({rows[r][s.model_col], rows[r][s.ckpt_col]}));
    }
  }
}

TEST_CASE("rerun skips current stages and a deleted stage is rebuilt identically") {
  const auto dir = fresh_dir("trajlab_pipeline_resume");
  const auto cfg = smoke(dir);
  run(cfg);
  const auto before = slurp(dir / "sweep" / "corruption_ppl.csv");
  const auto again = run(cfg);
  for (const auto& s : again.stages) CHECK(s.skipped);

  fs::remove_all(dir / "sweep");
  const auto third = run(cfg);
  for (const auto& s : third.stages) CHECK(s.skipped == (s.name != "sweep"));
  CHECK(slurp(dir / "sweep" / "corruption_ppl.csv") == before);

  // A changed setting invalidates the stages that read it and their dependents.
  auto changed = cfg;
  changed.seed = 7;
  const auto fourth = run(changed);
  const std::set<std::string> seeded{"decode", "sweep", "icl", "scaling"};
  for (const auto& s : fourth.stages) CHECK(s.skipped == !seeded.count(s.name));
  changed.top_p = 0.5;
  const auto fifth = run(changed);
  for (const auto& s : fifth.stages) CHECK(s.skipped == (s.name != "decode" && s.name != "sweep"));
  changed.orders = {1, 3};
  changed.large_order = 3;
  const auto sixth = run(changed);
  for (const auto& s : sixth.stages) CHECK_FALSE(s.skipped);
  fs::remove_all(dir);
}

TEST_CASE("single stages need their upstream stages") {
  const auto dir = fresh_dir("trajlab_pipeline_stage");
  const auto cfg = smoke(dir);
  try {
    run_stage(cfg, "dump");
    FAIL("expected a stage failure");
  } catch (const StageFailure& e) {
    CHECK(e.stage() == "dump");
    CHECK(e.code() == ErrorCode::IncompleteRun);
  }
  CHECK_NOTHROW(run_stage(cfg, "train"));
  CHECK_NOTHROW(run_stage(cfg, "dump"));
  // decode needs only the trained models.
  CHECK_NOTHROW(run_stage(cfg, "decode"));
  CHECK_THROWS_AS(run_stage(cfg, "scaling"), StageFailure);
  CHECK(RunManifest::load(dir).stages.size() == 3);
  try {
    report(RunManifest::load(dir));
    FAIL("expected IncompleteRun");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IncompleteRun);
  }
  fs::remove_all(dir);
}
