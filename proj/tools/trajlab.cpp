// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Exit codes: 0 success, 2 config error, 3 stage failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trajlab/backend.hpp"
#include "trajlab/csv.hpp"
#include "trajlab/pipeline.hpp"
#include "trajlab/scaling.hpp"
#include "trajlab/trends.hpp"

namespace fs = std::filesystem;
using namespace trajlab;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  bool force = false;
  bool quiet = false;
};

struct DecodeFlags {
  std::optional<double> lambda_s;
  std::optional<double> lambda_l;
  std::optional<std::string> strategy;
  std::optional<double> top_p;
  std::optional<std::size_t> max_new_tokens;
  std::optional<std::size_t> prompt_len;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig resolve_config(const GlobalFlags& g) {
  if (g.config.empty()) throw Error(ErrorCode::ConfigError, "--config is required for this command");
  auto cfg = load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.out_dir = *g.out;
  if (g.jobs) cfg.jobs = *g.jobs;
  return cfg;
}

void apply_decode_flags(ExperimentConfig& cfg, const DecodeFlags& d) {
  if (d.lambda_s || d.lambda_l) {
    cfg.lambdas = {{d.lambda_s.value_or(0.0), d.lambda_l.value_or(1.0)}};
  }
  if (d.strategy) {
    try {
      cfg.strategies = {parse_strategy(*d.strategy)};
    } catch (const Error&) {
      throw Error(ErrorCode::ConfigError, "--strategy: expected greedy or nucleus, got '" + *d.strategy + "'");
    }
  }
  if (d.top_p) cfg.top_p = *d.top_p;
  if (d.max_new_tokens) cfg.max_new_tokens = *d.max_new_tokens;
  if (d.prompt_len) cfg.prompt_len = *d.prompt_len;
  if (d.seed) cfg.seed = *d.seed;
}

RunOptions run_options(const GlobalFlags& g) {
  RunOptions opts;
  opts.force = g.force;
  if (!g.quiet) opts.log = [](const std::string& line) { std::cerr << "[trajlab] " << line << '\n'; };
  return opts;
}

// Trend analysis of externally produced dumps, one file per checkpoint.
void external_trends(const std::vector<std::string>& dumps, const std::vector<double>& percents,
                     const fs::path& out_dir, std::size_t jobs) {
  std::vector<fs::path> files(dumps.begin(), dumps.end());
  const auto series = ingest_dump(files);
  const auto& table = series.table();
  fs::create_directories(out_dir);
  CsvWriter pops(out_dir / "populations.csv", {"model", "start_percent", "start_index", "total", "stagnated", "upward",
                                               "downward", "unclassified"});
  for (double pct : percents) {
    const auto analysis = analyze_trends(table, pct, TrendConfig{}, jobs);
    const auto& p = analysis.population;
    pops.field(table.model_id).field(pct).field(static_cast<std::uint64_t>(p.start_index));
    pops.field(static_cast<std::uint64_t>(p.total));
    for (auto c : p.counts) pops.field(static_cast<std::uint64_t>(c));
    pops.end_row();
    write_verdicts_csv(out_dir / ("verdicts_p" + format_double(pct) + ".csv"), table, analysis.verdicts);
  }
}

void standalone_scaling(const fs::path& input, const fs::path& output, const std::string& mode, double epsilon) {
  ResidualMode m;
  try {
    m = parse_residual_mode(mode);
  } catch (const Error&) {
    throw Error(ErrorCode::ConfigError, "--mode: expected endpoints or ols, got '" + mode + "'");
  }
  write_scaling_csv(output, rank_tasks(read_scaling_csv(input), m, epsilon));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajlab: training-trajectory analysis on n-gram checkpoint series"};
  app.set_version_flag("--version", std::string(TRAJLAB_VERSION));
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("-c,--config", g.config, "experiment config file");
  app.add_option("--seed", g.seed, "override run.seed");
  app.add_option("--out", g.out, "override run.out");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--force", g.force, "rerun stages even when outputs are current");
  app.add_flag("-q,--quiet", g.quiet, "no progress messages");

  std::vector<CLI::App*> stage_cmds;
  for (const auto& name : stage_names()) {
    if (name == "decode" || name == "trends" || name == "scaling") continue;
    stage_cmds.push_back(app.add_subcommand(name, "run the " + name + " stage"));
  }

  auto* decode_cmd = app.add_subcommand("decode", "run the decode stage");
  DecodeFlags d;
  decode_cmd->add_option("--lambda-s", d.lambda_s, "weight on the small model");
  decode_cmd->add_option("--lambda-l", d.lambda_l, "weight on the large model");
  decode_cmd->add_option("--strategy", d.strategy, "greedy|nucleus");
  decode_cmd->add_option("--top-p", d.top_p, "nucleus mass");
  decode_cmd->add_option("--max-new-tokens", d.max_new_tokens, "generation length");
  decode_cmd->add_option("--prompt-len", d.prompt_len, "prompt length in tokens");
  decode_cmd->add_option("--seed", d.seed, "sampling seed");

  auto* trends_cmd = app.add_subcommand("trends", "run the trends stage, or classify external dumps");
  std::vector<std::string> dumps;
  std::vector<double> percents{10.0, 40.0};
  std::string trends_out = "trends-out";
  trends_cmd->add_option("--dumps", dumps, "per-checkpoint dump files of one model");
  trends_cmd->add_option("--start-percent", percents, "start fractions for --dumps");
  trends_cmd->add_option("--output", trends_out, "output directory for --dumps");

  auto* scaling_cmd = app.add_subcommand("scaling", "run the scaling stage, or score a CSV");
  std::string scaling_in, scaling_out = "scaling_metrics.csv", scaling_mode = "endpoints";
  double scaling_eps = 1e-9;
  scaling_cmd->add_option("--input", scaling_in, "CSV with task_id,capacity,accuracy");
  scaling_cmd->add_option("--output", scaling_out, "metrics CSV for --input");
  scaling_cmd->add_option("--mode", scaling_mode, "endpoints|ols");
  scaling_cmd->add_option("--epsilon", scaling_eps, "floor for the deviation terms");

  auto* run_cmd = app.add_subcommand("run", "run every stage in order");
  auto* report_cmd = app.add_subcommand("report", "collect plot-data CSVs of a completed run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (trends_cmd->parsed() && !dumps.empty()) {
      external_trends(dumps, percents, trends_out, g.jobs.value_or(1));
      return kOk;
    }
    if (scaling_cmd->parsed() && !scaling_in.empty()) {
      standalone_scaling(scaling_in, scaling_out, scaling_mode, scaling_eps);
      return kOk;
    }

    auto cfg = resolve_config(g);
    if (decode_cmd->parsed()) apply_decode_flags(cfg, d);
    cfg.validate();
    const auto opts = run_options(g);

    if (run_cmd->parsed()) {
      const auto manifest = run(cfg, opts);
      std::cout << (cfg.out_dir / "manifest.json").string() << '\n';
      return kOk;
    }
    if (report_cmd->parsed()) {
      for (const auto& f : report(RunManifest::load(cfg.out_dir))) {
        std::cout << f.plot << '\t' << (cfg.out_dir / f.path).string() << '\n';
      }
      return kOk;
    }
    for (auto* sub : app.get_subcommands()) {
      const auto record = run_stage(cfg, sub->get_name(), opts);
      for (const auto& o : record.outputs) std::cout << (cfg.out_dir / o).string() << '\n';
    }
    return kOk;
  } catch (const Error& e) {
    std::cerr << "trajlab: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigError ? kConfigError : kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "trajlab: " << e.what() << '\n';
    return kStageFailure;
  }
}
