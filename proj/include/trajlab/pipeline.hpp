// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajlab/corpus.hpp"
#include "trajlab/decoder.hpp"
#include "trajlab/error.hpp"
#include "trajlab/scaling.hpp"
#include "trajlab/trends.hpp"

namespace trajlab {

struct LambdaPair {
  double lambda_s = 0.0;
  double lambda_l = 1.0;
};

// Everything a run depends on. Input paths are resolved against the config
// file's directory; the output directory against the working directory.
struct ExperimentConfig {
  std::uint64_t seed = 1234;
  std::filesystem::path out_dir = "trajlab-out";
  std::size_t jobs = 1;

  // [corpus]
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  TokenizePolicy policy = TokenizePolicy::Whitespace;
  std::size_t max_len = 0;

  // [backend]
  std::vector<std::size_t> orders{1, 2, 3};
  std::size_t shards = 4;
  double uniform_weight = 0.01;

  // [trends]
  std::vector<double> start_percents{10.0, 40.0};
  std::vector<TrendLabel> subset_labels{TrendLabel::Stagnated, TrendLabel::Upward, TrendLabel::Downward};
  TrendConfig trend;

  // [decode]
  std::size_t small_order = 1;
  std::size_t large_order = 3;
  std::vector<LambdaPair> lambdas{{1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}};
  std::vector<Strategy> strategies{Strategy::Greedy, Strategy::Nucleus};
  double top_p = 0.9;
  std::size_t prompt_len = 5;
  std::size_t max_new_tokens = 50;
  std::size_t num_prompts = 20;

  // [corruption]
  std::vector<double> corruption_rates{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

  // [icl]
  std::vector<std::filesystem::path> tasks;
  std::size_t shots = 2;
  std::string exemplar_template = "{stem}\nA: {answer}\n";

  // [scaling]
  ResidualMode scaling_mode = ResidualMode::Endpoints;
  double scaling_epsilon = 1e-9;

  /// Throws ConfigError with a field path (e.g. "decode.lambdas[2].lambda_s").
  void validate() const;

  /// Canonical JSON of every setting that affects results (not out_dir/jobs).
  nlohmann::json to_json() const;

  /// Hash of to_json() plus the bytes of every input file, hex encoded.
  /// Independent of key order in the config file.
  std::string hash() const;

  /// Like hash(), restricted to the settings `stage` and its dependencies
  /// read. Stage outputs are reused while this value is unchanged.
  std::string stage_hash(const std::string& stage) const;
};

/// Parses the INI-style key/value file, then applies TRAJLAB_<SECTION>_<KEY>
/// environment overrides. Throws ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"train", "dump", "trends", "decode", "sweep", "icl", "scaling"};
  return names;
}

/// Stages whose outputs `stage` reads, directly or indirectly.
const std::vector<std::string>& stage_dependencies(const std::string& stage);

struct StageRecord {
  std::string name;
  std::vector<std::string> outputs;  // relative to out_dir
  bool skipped = false;              // outputs already present for this config hash
  double wall_clock_s = 0.0;
  std::vector<std::string> notes;
};

struct RunManifest {
  std::string config_hash;
  std::string artifact_version;
  std::filesystem::path out_dir;
  std::vector<StageRecord> stages;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& out_dir);
};

// Raised when a stage fails; carries the stage name and the module error.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const Error& cause)
      : Error(cause.code(), "stage '" + stage + "' failed: " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct RunOptions {
  bool force = false;  // rerun even when outputs are current
  std::function<void(const std::string&)> log;
};

/// Runs the stages train -> dump -> trends -> decode -> sweep -> icl ->
/// scaling. Stages whose outputs exist for the same stage_hash are skipped.
RunManifest run(const ExperimentConfig& config, const RunOptions& options = {});

/// Runs one named stage; the stages it depends on must already be current.
StageRecord run_stage(const ExperimentConfig& config, const std::string& stage, const RunOptions& options = {});

struct ReportFile {
  std::string plot;    // what the data is for, e.g. "validation_ppl"
  std::string path;    // relative to out_dir
  std::string source;  // stage output it was copied from
};

/// Collects the plot-data CSVs of a completed run into <out_dir>/report.
/// Throws IncompleteRun when a stage's outputs are missing.
std::vector<ReportFile> report(const RunManifest& manifest);

}  // namespace trajlab
