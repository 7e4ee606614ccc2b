// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "trajlab/backend.hpp"
#include "trajlab/csv.hpp"
#include "trajlab/icl.hpp"
#include "trajlab/parallel.hpp"
#include "trajlab/rng.hpp"
#include "trajlab/stats.hpp"

namespace trajlab {
namespace fs = std::filesystem;
namespace {

// ---------------------------------------------------------------------------
// Config parsing

// section -> keys accepted in the config file and as environment overrides.
const std::map<std::string, std::vector<std::string>>& config_schema() {
  static const std::map<std::string, std::vector<std::string>> schema{
      {"run", {"seed", "out", "jobs"}},
      {"corpus", {"train", "valid", "policy", "max_len"}},
      {"backend", {"orders", "shards", "uniform_weight"}},
      {"trends", {"start_percents", "subset_labels", "p_threshold", "band_low", "band_high"}},
      {"decode",
       {"small_order", "large_order", "lambdas", "strategies", "top_p", "prompt_len", "max_new_tokens",
        "num_prompts"}},
      {"corruption", {"rates"}},
      {"icl", {"tasks", "shots", "template"}},
      {"scaling", {"mode", "epsilon"}},
  };
  return schema;
}

[[noreturn]] void config_error(const std::string& field, const std::string& message) {
  throw Error(ErrorCode::ConfigError, field + ": " + message);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double parse_double(const std::string& field, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::logic_error&) {
    config_error(field, "expected a number, got '" + value + "'");
  }
}

std::uint64_t parse_uint(const std::string& field, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    config_error(field, "expected a non-negative integer, got '" + value + "'");
  }
  try {
    return std::stoull(value);
  } catch (const std::logic_error&) {
    config_error(field, "integer out of range: '" + value + "'");
  }
}

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[++i];
      out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Short label for file names, e.g. 0.2 or -1.
std::string lambda_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Stage bookkeeping

fs::path marker_path(const ExperimentConfig& cfg, const std::string& stage) {
  return cfg.out_dir / stage / ".stage.json";
}

std::optional<std::vector<std::string>> current_outputs(const ExperimentConfig& cfg, const std::string& stage,
                                                        const std::string& hash) {
  const auto marker = marker_path(cfg, stage);
  if (!fs::exists(marker)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(read_file(marker));
    if (j.at("config_hash").get<std::string>() != hash) return std::nullopt;
    auto outputs = j.at("outputs").get<std::vector<std::string>>();
    for (const auto& o : outputs) {
      if (!fs::exists(cfg.out_dir / o)) return std::nullopt;
    }
    return outputs;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

void write_marker(const ExperimentConfig& cfg, const std::string& stage, const std::string& hash,
                  const std::vector<std::string>& outputs) {
  std::ofstream out(marker_path(cfg, stage), std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write stage marker for " + stage);
  out << nlohmann::json{{"config_hash", hash}, {"outputs", outputs}}.dump(1) << '\n';
}

std::string model_id_for(std::size_t order) { return "ngram-o" + std::to_string(order); }

// Collects relative output paths while a stage writes them.
class StageContext {
 public:
  StageContext(const ExperimentConfig& cfg, std::string stage) : cfg_(cfg), stage_(std::move(stage)) {
    fs::remove_all(cfg_.out_dir / stage_);
    fs::create_directories(cfg_.out_dir / stage_);
  }

  fs::path output(const std::string& relative) {
    const fs::path rel = fs::path(stage_) / relative;
    fs::create_directories((cfg_.out_dir / rel).parent_path());
    outputs_.push_back(rel.generic_string());
    return cfg_.out_dir / rel;
  }
  void note(std::string text) { notes_.push_back(std::move(text)); }

  const ExperimentConfig& config() const { return cfg_; }
  std::vector<std::string>& outputs() { return outputs_; }
  std::vector<std::string>& notes() { return notes_; }

 private:
  const ExperimentConfig& cfg_;
  std::string stage_;
  std::vector<std::string> outputs_;
  std::vector<std::string> notes_;
};

// Trained models and the validation corpus, reloaded from the train stage.
struct Workspace {
  Vocabulary vocab;
  std::vector<Document> valid;
  std::vector<std::unique_ptr<NgramSeries>> models;  // ascending order

  const NgramSeries& model(std::size_t order) const {
    for (const auto& m : models) {
      if (m->order() == order) return *m;
    }
    throw Error(ErrorCode::ConfigError, "no model of order " + std::to_string(order));
  }
  std::vector<const LanguageModelSeries*> all() const {
    std::vector<const LanguageModelSeries*> out;
    for (const auto& m : models) out.push_back(m.get());
    return out;
  }
};

CorpusOptions valid_options(const ExperimentConfig& cfg) { return CorpusOptions{cfg.max_len, "valid"}; }

Workspace load_workspace(const ExperimentConfig& cfg) {
  Workspace ws;
  ws.vocab = Vocabulary::from_json(nlohmann::json::parse(read_file(cfg.out_dir / "train" / "vocab.json")));
  Vocabulary probe = ws.vocab;
  ws.valid = load_corpus(cfg.valid_path, probe, valid_options(cfg));
  if (probe.size() != ws.vocab.size()) {
    throw Error(ErrorCode::AlignmentError, "validation corpus changed since training");
  }
  for (std::size_t order : cfg.orders) {
    ws.models.push_back(std::make_unique<NgramSeries>(
        NgramSeries::load(cfg.out_dir / "train" / "models" / (model_id_for(order) + ".json"))));
  }
  return ws;
}

// (model, checkpoint) -> validation perplexity exactly as the dump stage printed it.
std::map<std::pair<std::string, std::size_t>, std::string> load_validation_ppl(const ExperimentConfig& cfg) {
  const auto rows = read_csv(cfg.out_dir / "dump" / "validation_ppl.csv");
  std::map<std::pair<std::string, std::size_t>, std::string> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    out[{rows[r].at(0), static_cast<std::size_t>(std::stoull(rows[r].at(2)))}] = rows[r].at(8);
  }
  return out;
}

std::vector<Task> load_tasks(const ExperimentConfig& cfg) {
  std::vector<Task> tasks;
  for (const auto& p : cfg.tasks) tasks.push_back(load_task(p));
  return tasks;
}

PromptTemplate prompt_template(const ExperimentConfig& cfg) { return PromptTemplate{cfg.exemplar_template}; }

// ---------------------------------------------------------------------------
// Stages

void stage_train(StageContext& ctx) {
  const auto& cfg = ctx.config();
  Vocabulary vocab(cfg.policy);
  const auto train = load_corpus(cfg.train_path, vocab, CorpusOptions{cfg.max_len, "train"});
  load_corpus(cfg.valid_path, vocab, valid_options(cfg));
  const auto tmpl = prompt_template(cfg);
  for (const auto& task : load_tasks(cfg)) intern_task_tokens(task, vocab, tmpl);

  {
    std::ofstream out(ctx.output("vocab.json"), std::ios::binary);
    out << vocab.to_json().dump() << '\n';
  }
  CsvWriter summary(ctx.output("models.csv"), {"model", "order", "checkpoints", "params", "vocab_size"});
  for (std::size_t order : cfg.orders) {
    const auto series = train_ngram(model_id_for(order), train, vocab, order, cfg.shards,
                                    InterpolationWeights::defaults(order, cfg.uniform_weight));
    series.save(ctx.output("models/" + model_id_for(order) + ".json"));
    summary.field(series.model_id())
        .field(static_cast<std::uint64_t>(order))
        .field(static_cast<std::uint64_t>(series.num_checkpoints()))
        .field(series.checkpoints().back().params)
        .field(static_cast<std::uint64_t>(vocab.size()));
    summary.end_row();
  }
}

void stage_dump(StageContext& ctx) {
  const auto& cfg = ctx.config();
  const auto ws = load_workspace(cfg);
  CsvWriter ppl_rows(ctx.output("validation_ppl.csv"),
                 {"model", "order", "checkpoint", "step", "tokens_seen", "params", "flops", "backend", "validation_ppl"});
  for (const auto& m : ws.models) {
    const auto table = score_corpus(*m, ws.valid, cfg.jobs);
    for (std::size_t c = 0; c < m->num_checkpoints(); ++c) {
      write_dump(table, c, ctx.output(m->model_id() + "/ckpt" + std::to_string(c) + ".jsonl"));
      ctx.outputs().push_back(
          (fs::path("dump") / m->model_id() / ("ckpt" + std::to_string(c) + ".meta.json")).generic_string());
      const auto& meta = m->checkpoint(c);
      ppl_rows.field(m->model_id())
          .field(static_cast<std::uint64_t>(m->order()))
          .field(static_cast<std::uint64_t>(c))
          .field(meta.step)
          .field(meta.tokens_seen)
          .field(meta.params)
          .field(meta.flops)
          .field(m->backend_kind())
          .field(corpus_perplexity(*m, c, ws.valid));
      ppl_rows.end_row();
    }
  }
}

std::vector<fs::path> dump_files(const ExperimentConfig& cfg, const NgramSeries& m) {
  std::vector<fs::path> files;
  for (std::size_t c = 0; c < m.num_checkpoints(); ++c) {
    files.push_back(cfg.out_dir / "dump" / m.model_id() / ("ckpt" + std::to_string(c) + ".jsonl"));
  }
  return files;
}

void stage_trends(StageContext& ctx) {
  const auto& cfg = ctx.config();
  const auto ws = load_workspace(cfg);
  const auto vppl = load_validation_ppl(cfg);
  std::vector<LogProbTable> tables;
  for (const auto& m : ws.models) {
    const auto files = dump_files(cfg, *m);
    tables.push_back(ingest_dump(files).table());
  }
  for (std::size_t i = 1; i < tables.size(); ++i) check_aligned(tables.front(), tables[i]);

  CsvWriter pops(ctx.output("populations.csv"),
                 {"model", "start_percent", "start_index", "total", "stagnated", "upward", "downward", "unclassified",
                  "frac_stagnated", "frac_upward", "frac_downward", "frac_unclassified"});
  CsvWriter dd(ctx.output("double_descent.csv"), {"model", "start_percent", "start_index", "flagged", "fraction"});
  for (const auto& table : tables) {
    for (double pct : cfg.start_percents) {
      TrendAnalysis analysis;
      try {
        analysis = analyze_trends(table, pct, cfg.trend, cfg.jobs);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::WindowTooShort) throw;
        ctx.note(table.model_id + " @" + format_double(pct) + "%: " + e.what());
        continue;
      }
      const auto& p = analysis.population;
      pops.field(table.model_id).field(pct).field(static_cast<std::uint64_t>(p.start_index));
      pops.field(static_cast<std::uint64_t>(p.total));
      for (auto c : p.counts) pops.field(static_cast<std::uint64_t>(c));
      for (auto f : p.fractions) pops.field(f);
      pops.end_row();

      const std::string stem = "verdicts/" + table.model_id + "_p" + format_double(pct);
      write_verdicts_csv(ctx.output(stem + ".csv"), table, analysis.verdicts);
      std::ofstream(ctx.output(stem + ".json"), std::ios::binary) << verdicts_to_json(table, analysis.verdicts).dump()
                                                                  << '\n';

      if (table.num_checkpoints() - p.start_index >= 5) {
        std::size_t flagged = 0;
        for (const auto& obs : observations(table)) {
          if (double_descent_peak(obs.ppl_series, p.start_index, cfg.trend)) ++flagged;
        }
        dd.field(table.model_id).field(pct).field(static_cast<std::uint64_t>(p.start_index));
        dd.field(static_cast<std::uint64_t>(flagged))
            .field(static_cast<double>(flagged) / static_cast<double>(p.total));
        dd.end_row();
      } else {
        ctx.note(table.model_id + " @" + format_double(pct) + "%: window shorter than 5, no double-descent scan");
      }
    }
  }

  CsvWriter subsets(ctx.output("subset_trajectories.csv"),
                    {"selector", "label", "start_percent", "selected", "selected_fraction", "evaluator", "checkpoint",
                     "step", "tokens_seen", "flops", "validation_ppl", "subset_ppl"});
  for (const auto& selector : tables) {
    for (double pct : cfg.start_percents) {
      for (TrendLabel label : cfg.subset_labels) {
        SubsetSelection sel;
        try {
          sel = select_subset(selector, pct, label, cfg.trend, cfg.jobs);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::EmptySelection && e.code() != ErrorCode::WindowTooShort) throw;
          ctx.note(e.what());
          continue;
        }
        for (const auto& evaluator : tables) {
          for (const auto& point : evaluate_subset(evaluator, sel)) {
            subsets.field(selector.model_id)
                .field(to_string(label))
                .field(pct)
                .field(static_cast<std::uint64_t>(sel.keys.size()))
                .field(sel.fraction)
                .field(evaluator.model_id)
                .field(static_cast<std::uint64_t>(point.checkpoint.index))
                .field(point.checkpoint.step)
                .field(point.checkpoint.tokens_seen)
                .field(point.checkpoint.flops)
                .field(vppl.at({evaluator.model_id, point.checkpoint.index}))
                .field(point.subset_ppl);
            subsets.end_row();
          }
        }
      }
    }
  }
}

struct DecodeSetting {
  std::string name;
  LambdaPair lambdas;
  Strategy strategy;
};

std::vector<DecodeSetting> decode_settings(const ExperimentConfig& cfg) {
  std::vector<DecodeSetting> out;
  for (const auto& l : cfg.lambdas) {
    for (Strategy s : cfg.strategies) {
      out.push_back({"s" + lambda_text(l.lambda_s) + "_l" + lambda_text(l.lambda_l) + "_" + std::string(to_string(s)),
                     l, s});
    }
  }
  return out;
}

void stage_decode(StageContext& ctx) {
  const auto& cfg = ctx.config();
  const auto ws = load_workspace(cfg);
  const auto& small = ws.model(cfg.small_order);
  const auto& large = ws.model(cfg.large_order);
  std::vector<Document> prompts;
  for (const auto& doc : ws.valid) {
    if (prompts.size() == cfg.num_prompts) break;
    if (doc.size() >= cfg.prompt_len) prompts.push_back(extract_prompt(doc, cfg.prompt_len));
  }
  if (prompts.size() < cfg.num_prompts) {
    ctx.note("only " + std::to_string(prompts.size()) + " validation documents are long enough for prompts");
  }
  if (prompts.empty()) throw Error(ErrorCode::InsufficientLength, "no validation document can supply a prompt");

  CsvWriter index(ctx.output("settings.csv"), {"setting", "lambda_s", "lambda_l", "strategy", "top_p",
                                               "max_new_tokens", "small", "large", "generations", "terminated_early"});
  const auto settings = decode_settings(cfg);
  for (std::size_t si = 0; si < settings.size(); ++si) {
    const auto& setting = settings[si];
    std::vector<GenerationRecord> records(prompts.size());
    parallel_for(prompts.size(), cfg.jobs, [&](std::size_t i) {
      DecodeConfig dc{setting.lambdas.lambda_s, setting.lambdas.lambda_l, setting.strategy, cfg.top_p,
                      cfg.max_new_tokens, derive_seed(derive_seed(cfg.seed, 0xDEC0DE + si), i)};
      records[i] = decode({&small, small.final_checkpoint()}, {&large, large.final_checkpoint()}, prompts[i], dc,
                          ws.vocab.end_of_document());
    });
    std::ofstream out(ctx.output("gen_" + setting.name + ".jsonl"), std::ios::binary);
    std::uint64_t early = 0;
    for (const auto& r : records) {
      out << to_json(r, ws.vocab).dump() << '\n';
      early += r.terminated_early ? 1 : 0;
    }
    index.field(setting.name)
        .field(setting.lambdas.lambda_s)
        .field(setting.lambdas.lambda_l)
        .field(to_string(setting.strategy))
        .field(cfg.top_p)
        .field(static_cast<std::uint64_t>(cfg.max_new_tokens))
        .field(small.model_id())
        .field(large.model_id())
        .field(static_cast<std::uint64_t>(records.size()))
        .field(early);
    index.end_row();
  }
}

std::vector<ScoredText> load_generations(const fs::path& path) {
  std::vector<ScoredText> texts;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ScoredText t;
    t.doc.id = j.at("prompt_id").get<std::string>() + "#gen";
    t.doc.tokens = j.at("prompt_tokens").get<std::vector<TokenId>>();
    t.first_scored = t.doc.tokens.size();
    for (const auto& step : j.at("per_step")) t.doc.tokens.push_back(step.at("tok").get<TokenId>());
    if (t.doc.tokens.size() > t.first_scored) texts.push_back(std::move(t));
  }
  return texts;
}

void stage_sweep(StageContext& ctx) {
  const auto& cfg = ctx.config();
  const auto ws = load_workspace(cfg);
  const auto vppl = load_validation_ppl(cfg);
  const auto models = ws.all();

  CsvWriter finals(ctx.output("generated_final_ppl.csv"),
                   {"setting", "lambda_s", "lambda_l", "strategy", "model", "params", "texts", "final_ppl",
                    "spearman_rho"});
  CsvWriter trajs(ctx.output("generated_trajectories.csv"),
                  {"setting", "model", "checkpoint", "step", "tokens_seen", "flops", "validation_ppl", "ppl"});
  CsvWriter per_text(ctx.output("generation_ppl.csv"), {"setting", "text", "model", "final_ppl"});
  for (const auto& setting : decode_settings(cfg)) {
    const auto texts = load_generations(cfg.out_dir / "decode" / ("gen_" + setting.name + ".jsonl"));
    if (texts.empty()) {
      ctx.note(setting.name + ": no generated tokens to evaluate");
      continue;
    }
    const auto sweep = scaling_sweep(texts, models);
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto& row = sweep.rows[m];
      finals.field(setting.name)
          .field(setting.lambdas.lambda_s)
          .field(setting.lambdas.lambda_l)
          .field(to_string(setting.strategy))
          .field(row.model_id)
          .field(row.params)
          .field(static_cast<std::uint64_t>(texts.size()))
          .field(row.final_ppl)
          .field(sweep.spearman_rho);
      finals.end_row();
      for (std::size_t c = 0; c < row.trajectory.size(); ++c) {
        const auto& meta = models[m]->checkpoint(c);
        trajs.field(setting.name)
            .field(row.model_id)
            .field(static_cast<std::uint64_t>(c))
            .field(meta.step)
            .field(meta.tokens_seen)
            .field(meta.flops)
            .field(vppl.at({row.model_id, c}))
            .field(row.trajectory[c]);
        trajs.end_row();
      }
    }
    for (const auto& t : texts) {
      for (const auto* m : models) {
        per_text.field(setting.name)
            .field(t.doc.id)
            .field(m->model_id())
            .field(perplexity(*m, m->final_checkpoint(), t.doc, t.first_scored).aggregate);
        per_text.end_row();
      }
    }
  }

  CsvWriter corr(ctx.output("corruption_ppl.csv"), {"rate", "model", "params", "ppl", "random_model_ppl"});
  for (std::size_t ri = 0; ri < cfg.corruption_rates.size(); ++ri) {
    const double rate = cfg.corruption_rates[ri];
    std::vector<CorruptionResult> results;
    std::vector<CorruptionSpec> specs;
    for (std::size_t d = 0; d < ws.valid.size(); ++d) {
      specs.push_back({rate, derive_seed(derive_seed(cfg.seed, 0xC0FFEE + ri), d)});
      results.push_back(corrupt_with_positions(ws.valid[d], specs.back(), ws.vocab));
    }
    write_corrupted_corpus(ctx.output("corrupted/rate_" + lambda_text(rate) + ".txt"), results, specs, ws.vocab,
                           cfg.max_len);
    ctx.outputs().push_back(
        (fs::path("sweep") / "corrupted" / ("rate_" + lambda_text(rate) + ".txt.manifest.json")).generic_string());
    std::vector<Document> docs;
    for (auto& r : results) docs.push_back(r.document);
    for (const auto* m : models) {
      corr.field(rate)
          .field(m->model_id())
          .field(m->checkpoints().back().params)
          .field(corpus_perplexity(*m, m->final_checkpoint(), docs))
          .field(static_cast<double>(ws.vocab.size()));
      corr.end_row();
    }
  }
}

void stage_icl(StageContext& ctx) {
  const auto& cfg = ctx.config();
  const auto ws = load_workspace(cfg);
  const auto vppl = load_validation_ppl(cfg);
  const auto tasks = load_tasks(cfg);
  const auto tmpl = prompt_template(cfg);

  CsvWriter results(ctx.output("results.csv"),
                    {"task", "model", "checkpoint", "step", "tokens_seen", "flops", "validation_ppl", "accuracy",
                     "mean_correct_ppl", "mean_incorrect_ppl"});
  CsvWriter finals(ctx.output("final_accuracy.csv"), {"task_id", "model", "capacity", "accuracy"});
  // model -> checkpoint -> accuracies over tasks
  std::map<std::string, std::vector<std::vector<double>>> per_ckpt;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const auto& task = tasks[ti];
    for (const auto& m : ws.models) {
      const auto rows = option_ppl_trajectory(*m, ws.vocab, task, cfg.shots, derive_seed(cfg.seed, 0x1C1 + ti), tmpl,
                                              cfg.jobs);
      auto& acc = per_ckpt[m->model_id()];
      acc.resize(rows.size());
      for (const auto& r : rows) {
        results.field(task.name)
            .field(m->model_id())
            .field(static_cast<std::uint64_t>(r.checkpoint.index))
            .field(r.checkpoint.step)
            .field(r.checkpoint.tokens_seen)
            .field(r.checkpoint.flops)
            .field(vppl.at({m->model_id(), r.checkpoint.index}))
            .field(r.accuracy)
            .field(r.mean_correct_ppl)
            .field(r.mean_incorrect_ppl);
        results.end_row();
        acc[r.checkpoint.index].push_back(r.accuracy);
      }
      finals.field(task.name)
          .field(m->model_id())
          .field(static_cast<double>(m->checkpoints().back().params))
          .field(rows.back().accuracy);
      finals.end_row();
    }
  }
  if (tasks.empty()) ctx.note("no ICL tasks configured");

  CsvWriter by_ckpt(ctx.output("accuracy_by_checkpoint.csv"),
                 {"model", "checkpoint", "step", "flops", "validation_ppl", "mean_accuracy", "tasks"});
  for (const auto& m : ws.models) {
    for (std::size_t c = 0; c < m->num_checkpoints(); ++c) {
      const auto it = per_ckpt.find(m->model_id());
      const bool have = it != per_ckpt.end() && c < it->second.size() && !it->second[c].empty();
      const auto& meta = m->checkpoint(c);
      by_ckpt.field(m->model_id())
          .field(static_cast<std::uint64_t>(c))
          .field(meta.step)
          .field(meta.flops)
          .field(vppl.at({m->model_id(), c}))
          .field(have ? stats::mean(it->second[c]) : std::nan(""))
          .field(static_cast<std::uint64_t>(have ? it->second[c].size() : 0));
      by_ckpt.end_row();
    }
  }
}

void stage_scaling(StageContext& ctx) {
  const auto& cfg = ctx.config();
  const auto input = cfg.out_dir / "icl" / "final_accuracy.csv";
  const auto series = read_scaling_csv(input);
  const auto metrics_path = ctx.output("metrics.csv");
  const auto alt_mode = cfg.scaling_mode == ResidualMode::Endpoints ? ResidualMode::OLSFit : ResidualMode::Endpoints;
  const auto alt_path = ctx.output("metrics_" + std::string(to_string(alt_mode)) + ".csv");
  const auto rank_path = ctx.output("rankings.csv");
  bool usable = !series.empty();
  for (const auto& s : series) usable = usable && s.series.points.size() >= 3;
  if (!usable) {
    ctx.note("scaling metrics need at least 3 model sizes per task; tables left empty");
    write_scaling_csv(metrics_path, TaskRanking{});
    write_scaling_csv(alt_path, TaskRanking{});
    CsvWriter(rank_path, {"rank", "by_L", "by_B"});
    return;
  }
  const auto ranking = rank_tasks(series, cfg.scaling_mode, cfg.scaling_epsilon);
  write_scaling_csv(metrics_path, ranking);
  write_scaling_csv(alt_path, rank_tasks(series, alt_mode, cfg.scaling_epsilon));
  CsvWriter ranks(rank_path, {"rank", "by_L", "by_B"});
  for (std::size_t i = 0; i < ranking.by_linearity.size(); ++i) {
    ranks.field(static_cast<std::uint64_t>(i + 1)).field(ranking.by_linearity[i]).field(ranking.by_breakthroughness[i]);
    ranks.end_row();
  }
}

using StageFn = void (*)(StageContext&);

StageFn stage_function(const std::string& name) {
  static const std::map<std::string, StageFn> fns{
      {"train", stage_train}, {"dump", stage_dump},   {"trends", stage_trends}, {"decode", stage_decode},
      {"sweep", stage_sweep}, {"icl", stage_icl},     {"scaling", stage_scaling},
  };
  auto it = fns.find(name);
  if (it == fns.end()) throw Error(ErrorCode::ConfigError, "unknown stage '" + name + "'");
  return it->second;
}

StageRecord execute_stage(const ExperimentConfig& cfg, const std::string& name, const std::string& hash,
                          const RunOptions& options) {
  StageRecord rec;
  rec.name = name;
  const auto start = std::chrono::steady_clock::now();
  if (!options.force) {
    if (auto outputs = current_outputs(cfg, name, hash)) {
      rec.outputs = std::move(*outputs);
      rec.skipped = true;
      if (options.log) options.log(name + ": up to date, skipped");
      return rec;
    }
  }
  if (options.log) options.log(name + ": running");
  try {
    StageContext ctx(cfg, name);
    stage_function(name)(ctx);
    rec.outputs = std::move(ctx.outputs());
    rec.notes = std::move(ctx.notes());
    write_marker(cfg, name, hash, rec.outputs);
  } catch (const StageFailure&) {
    throw;
  } catch (const Error& e) {
    throw StageFailure(name, e);
  } catch (const std::exception& e) {
    throw StageFailure(name, Error(ErrorCode::IoError, e.what()));
  }
  rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& n : rec.notes) {
    if (options.log) options.log(name + ": note: " + n);
  }
  return rec;
}

void save_manifest(const RunManifest& manifest) {
  fs::create_directories(manifest.out_dir);
  std::ofstream out(manifest.out_dir / "manifest.json", std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write manifest");
  out << manifest.to_json().dump(1) << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

void ExperimentConfig::validate() const {
  if (!fs::is_regular_file(train_path)) config_error("corpus.train", "file not found: " + train_path.string());
  if (!fs::is_regular_file(valid_path)) config_error("corpus.valid", "file not found: " + valid_path.string());
  if (jobs < 1) config_error("run.jobs", "must be >= 1");
  if (orders.empty()) config_error("backend.orders", "at least one order is required");
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const std::string f = "backend.orders[" + std::to_string(i) + "]";
    if (orders[i] < 1) config_error(f, "order must be >= 1");
    if (i > 0 && orders[i] <= orders[i - 1]) config_error(f, "orders must be strictly increasing");
  }
  if (shards < 2) config_error("backend.shards", "must be >= 2");
  if (!(uniform_weight > 0.0 && uniform_weight <= 1.0)) config_error("backend.uniform_weight", "must lie in (0, 1]");
  for (std::size_t i = 0; i < start_percents.size(); ++i) {
    if (!(start_percents[i] > 0.0 && start_percents[i] <= 90.0)) {
      config_error("trends.start_percents[" + std::to_string(i) + "]", "must lie in (0, 90]");
    }
  }
  if (!(trend.p_threshold > 0.0 && trend.p_threshold < 1.0)) config_error("trends.p_threshold", "must lie in (0, 1)");
  if (!(trend.band_low > 0.0 && trend.band_low <= 1.0)) config_error("trends.band_low", "must lie in (0, 1]");
  if (!(trend.band_high >= 1.0)) config_error("trends.band_high", "must be >= 1");
  if (std::find(orders.begin(), orders.end(), small_order) == orders.end()) {
    config_error("decode.small_order", "order " + std::to_string(small_order) + " is not in backend.orders");
  }
  if (std::find(orders.begin(), orders.end(), large_order) == orders.end()) {
    config_error("decode.large_order", "order " + std::to_string(large_order) + " is not in backend.orders");
  }
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const std::string f = "decode.lambdas[" + std::to_string(i) + "]";
    if (!(lambdas[i].lambda_s >= -1.0 && lambdas[i].lambda_s <= 1.0)) {
      config_error(f + ".lambda_s", format_double(lambdas[i].lambda_s) + " outside [-1, 1]");
    }
    if (!(lambdas[i].lambda_l >= -1.0 && lambdas[i].lambda_l <= 1.0)) {
      config_error(f + ".lambda_l", format_double(lambdas[i].lambda_l) + " outside [-1, 1]");
    }
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) config_error("decode.top_p", "must lie in (0, 1]");
  if (prompt_len < 1) config_error("decode.prompt_len", "must be >= 1");
  if (max_new_tokens < 1) config_error("decode.max_new_tokens", "must be >= 1");
  if (num_prompts < 1) config_error("decode.num_prompts", "must be >= 1");
  for (std::size_t i = 0; i < corruption_rates.size(); ++i) {
    if (!(corruption_rates[i] >= 0.0 && corruption_rates[i] <= 1.0)) {
      config_error("corruption.rates[" + std::to_string(i) + "]", "must lie in [0, 1]");
    }
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!fs::is_regular_file(tasks[i])) {
      config_error("icl.tasks[" + std::to_string(i) + "]", "file not found: " + tasks[i].string());
    }
  }
  if (exemplar_template.find("{stem}") == std::string::npos ||
      exemplar_template.find("{answer}") == std::string::npos) {
    config_error("icl.template", "must contain {stem} and {answer}");
  }
  if (!(scaling_epsilon > 0.0)) config_error("scaling.epsilon", "must be > 0");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["run"] = {{"seed", seed}};
  j["corpus"] = {{"train", train_path.generic_string()},
                 {"valid", valid_path.generic_string()},
                 {"policy", to_string(policy)},
                 {"max_len", max_len}};
  j["backend"] = {{"orders", orders}, {"shards", shards}, {"uniform_weight", uniform_weight}};
  std::vector<std::string> labels;
  for (auto l : subset_labels) labels.emplace_back(to_string(l));
  j["trends"] = {{"start_percents", start_percents},
                 {"subset_labels", labels},
                 {"p_threshold", trend.p_threshold},
                 {"band_low", trend.band_low},
                 {"band_high", trend.band_high}};
  auto lam = nlohmann::json::array();
  for (const auto& l : lambdas) lam.push_back({l.lambda_s, l.lambda_l});
  std::vector<std::string> strats;
  for (auto s : strategies) strats.emplace_back(to_string(s));
  j["decode"] = {{"small_order", small_order}, {"large_order", large_order}, {"lambdas", lam},
                 {"strategies", strats},       {"top_p", top_p},             {"prompt_len", prompt_len},
                 {"max_new_tokens", max_new_tokens}, {"num_prompts", num_prompts}};
  j["corruption"] = {{"rates", corruption_rates}};
  std::vector<std::string> task_paths;
  for (const auto& t : tasks) task_paths.push_back(t.generic_string());
  j["icl"] = {{"tasks", task_paths}, {"shots", shots}, {"template", exemplar_template}};
  j["scaling"] = {{"mode", to_string(scaling_mode)}, {"epsilon", scaling_epsilon}};
  return j;
}

namespace {

// Hash of the named config sections plus the bytes of the input files they
// reference. Paths are identified by content, not location.
std::string section_hash(const ExperimentConfig& cfg, const std::set<std::string>& sections) {
  nlohmann::json j = cfg.to_json();
  j["corpus"].erase("train");
  j["corpus"].erase("valid");
  j["icl"].erase("tasks");
  nlohmann::json picked = nlohmann::json::object();
  for (const auto& s : sections) picked[s] = j.at(s);
  std::uint64_t h = fnv1a(picked.dump());
  if (sections.count("corpus")) {
    h = fnv1a(read_file(cfg.train_path), h);
    h = fnv1a(read_file(cfg.valid_path), h);
  }
  if (sections.count("icl")) {
    for (const auto& t : cfg.tasks) h = fnv1a(read_file(t), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

const std::vector<std::string>& stage_dependencies(const std::string& stage) {
  static const std::map<std::string, std::vector<std::string>> deps{
      {"train", {}},           {"dump", {"train"}},         {"trends", {"train", "dump"}},
      {"decode", {"train"}},   {"sweep", {"train", "decode"}}, {"icl", {"train", "dump"}},
      {"scaling", {"train", "dump", "icl"}},
  };
  auto it = deps.find(stage);
  if (it == deps.end()) throw Error(ErrorCode::ConfigError, "unknown stage '" + stage + "'");
  return it->second;
}

std::string ExperimentConfig::hash() const {
  return section_hash(*this, {"run", "corpus", "backend", "trends", "decode", "corruption", "icl", "scaling"});
}

std::string ExperimentConfig::stage_hash(const std::string& stage) const {
  static const std::map<std::string, std::set<std::string>> own{
      {"train", {"corpus", "backend"}},
      {"dump", {}},
      {"trends", {"trends"}},
      {"decode", {"run", "decode"}},
      {"sweep", {"corruption"}},
      {"icl", {"run", "icl"}},
      {"scaling", {"scaling"}},
  };
  std::set<std::string> sections = own.at(stage);
  for (const auto& dep : stage_dependencies(stage)) sections.insert(own.at(dep).begin(), own.at(dep).end());
  return section_hash(*this, sections);
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("config syntax: ") + e.what());
  }
  const auto& schema = config_schema();
  for (const auto& [section, body] : tree) {
    auto sec = schema.find(section);
    if (sec == schema.end()) config_error(section, "unknown section");
    if (!body.data().empty() && body.empty()) config_error(section, "keys must live inside a [section]");
    for (const auto& [key, value] : body) {
      if (std::find(sec->second.begin(), sec->second.end(), key) == sec->second.end()) {
        config_error(section + "." + key, "unknown key");
      }
    }
  }
  for (const auto& [section, keys] : schema) {
    for (const auto& key : keys) {
      const std::string env = "TRAJLAB_" + upper(section) + "_" + upper(key);
      if (const char* v = std::getenv(env.c_str())) tree.put(pt::ptree::path_type(section + "." + key, '.'), v);
    }
  }

  ExperimentConfig cfg;
  auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    auto v = tree.get_optional<std::string>(pt::ptree::path_type(section + "." + key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  };
  auto path_of = [&](const std::string& raw) {
    fs::path p(raw);
    return p.is_absolute() ? p : (base_dir / p).lexically_normal();
  };

  if (auto v = get("run", "seed")) cfg.seed = parse_uint("run.seed", *v);
  if (auto v = get("run", "out")) cfg.out_dir = *v;
  if (auto v = get("run", "jobs")) cfg.jobs = parse_uint("run.jobs", *v);

  if (auto v = get("corpus", "train")) cfg.train_path = path_of(*v);
  else config_error("corpus.train", "required");
  if (auto v = get("corpus", "valid")) cfg.valid_path = path_of(*v);
  else config_error("corpus.valid", "required");
  if (auto v = get("corpus", "policy")) {
    try {
      cfg.policy = parse_policy(*v);
    } catch (const Error&) {
      config_error("corpus.policy", "expected whitespace or byte, got '" + *v + "'");
    }
  }
  if (auto v = get("corpus", "max_len")) cfg.max_len = parse_uint("corpus.max_len", *v);

  if (auto v = get("backend", "orders")) {
    cfg.orders.clear();
    const auto items = split_list(*v);
    for (std::size_t i = 0; i < items.size(); ++i) {
      cfg.orders.push_back(parse_uint("backend.orders[" + std::to_string(i) + "]", items[i]));
    }
  }
  if (auto v = get("backend", "shards")) cfg.shards = parse_uint("backend.shards", *v);
  if (auto v = get("backend", "uniform_weight")) cfg.uniform_weight = parse_double("backend.uniform_weight", *v);

  if (auto v = get("trends", "start_percents")) {
    cfg.start_percents.clear();
    const auto items = split_list(*v);
    for (std::size_t i = 0; i < items.size(); ++i) {
      cfg.start_percents.push_back(parse_double("trends.start_percents[" + std::to_string(i) + "]", items[i]));
    }
  }
  if (auto v = get("trends", "subset_labels")) {
    cfg.subset_labels.clear();
    const auto items = split_list(*v);
    for (std::size_t i = 0; i < items.size(); ++i) {
      try {
        cfg.subset_labels.push_back(parse_trend_label(items[i]));
      } catch (const Error&) {
        config_error("trends.subset_labels[" + std::to_string(i) + "]", "unknown label '" + items[i] + "'");
      }
    }
  }
  if (auto v = get("trends", "p_threshold")) cfg.trend.p_threshold = parse_double("trends.p_threshold", *v);
  if (auto v = get("trends", "band_low")) cfg.trend.band_low = parse_double("trends.band_low", *v);
  if (auto v = get("trends", "band_high")) cfg.trend.band_high = parse_double("trends.band_high", *v);

  if (auto v = get("decode", "small_order")) cfg.small_order = parse_uint("decode.small_order", *v);
  if (auto v = get("decode", "large_order")) cfg.large_order = parse_uint("decode.large_order", *v);
  if (auto v = get("decode", "lambdas")) {
    cfg.lambdas.clear();
    const auto items = split_list(*v);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const std::string f = "decode.lambdas[" + std::to_string(i) + "]";
      const auto colon = items[i].find(':');
      if (colon == std::string::npos) config_error(f, "expected lambda_s:lambda_l, got '" + items[i] + "'");
      cfg.lambdas.push_back({parse_double(f + ".lambda_s", trim(items[i].substr(0, colon))),
                             parse_double(f + ".lambda_l", trim(items[i].substr(colon + 1)))});
    }
  }
  if (auto v = get("decode", "strategies")) {
    cfg.strategies.clear();
    const auto items = split_list(*v);
    for (std::size_t i = 0; i < items.size(); ++i) {
      try {
        cfg.strategies.push_back(parse_strategy(items[i]));
      } catch (const Error&) {
        config_error("decode.strategies[" + std::to_string(i) + "]", "expected greedy or nucleus");
      }
    }
  }
  if (auto v = get("decode", "top_p")) cfg.top_p = parse_double("decode.top_p", *v);
  if (auto v = get("decode", "prompt_len")) cfg.prompt_len = parse_uint("decode.prompt_len", *v);
  if (auto v = get("decode", "max_new_tokens")) cfg.max_new_tokens = parse_uint("decode.max_new_tokens", *v);
  if (auto v = get("decode", "num_prompts")) cfg.num_prompts = parse_uint("decode.num_prompts", *v);

  if (auto v = get("corruption", "rates")) {
    cfg.corruption_rates.clear();
    const auto items = split_list(*v);
    for (std::size_t i = 0; i < items.size(); ++i) {
      cfg.corruption_rates.push_back(parse_double("corruption.rates[" + std::to_string(i) + "]", items[i]));
    }
  }

  if (auto v = get("icl", "tasks")) {
    cfg.tasks.clear();
    for (const auto& item : split_list(*v)) cfg.tasks.push_back(path_of(item));
  }
  if (auto v = get("icl", "shots")) cfg.shots = parse_uint("icl.shots", *v);
  if (auto v = get("icl", "template")) cfg.exemplar_template = unescape(*v);

  if (auto v = get("scaling", "mode")) {
    try {
      cfg.scaling_mode = parse_residual_mode(*v);
    } catch (const Error&) {
      config_error("scaling.mode", "expected endpoints or ols, got '" + *v + "'");
    }
  }
  if (auto v = get("scaling", "epsilon")) cfg.scaling_epsilon = parse_double("scaling.epsilon", *v);
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Manifest

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["artifact_version"] = artifact_version;
  j["out_dir"] = out_dir.generic_string();
  auto& stages_json = j["stages"] = nlohmann::json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"name", s.name},
                           {"outputs", s.outputs},
                           {"skipped", s.skipped},
                           {"wall_clock_s", s.wall_clock_s},
                           {"notes", s.notes}});
  }
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.artifact_version = j.at("artifact_version").get<std::string>();
    m.out_dir = j.at("out_dir").get<std::string>();
    for (const auto& s : j.at("stages")) {
      m.stages.push_back({s.at("name").get<std::string>(), s.at("outputs").get<std::vector<std::string>>(),
                          s.at("skipped").get<bool>(), s.at("wall_clock_s").get<double>(),
                          s.at("notes").get<std::vector<std::string>>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed manifest: ") + e.what());
  }
}

RunManifest RunManifest::load(const fs::path& out_dir) {
  const auto path = out_dir / "manifest.json";
  if (!fs::exists(path)) throw Error(ErrorCode::IncompleteRun, "no manifest in " + out_dir.string());
  auto m = from_json(nlohmann::json::parse(read_file(path)));
  m.out_dir = out_dir;
  return m;
}

// ---------------------------------------------------------------------------
// Orchestration

RunManifest run(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  RunManifest manifest{config.hash(), TRAJLAB_VERSION, config.out_dir, {}};
  for (const auto& name : stage_names()) {
    manifest.stages.push_back(execute_stage(config, name, config.stage_hash(name), options));
    save_manifest(manifest);
  }
  return manifest;
}

StageRecord run_stage(const ExperimentConfig& config, const std::string& stage, const RunOptions& options) {
  config.validate();
  for (const auto& dep : stage_dependencies(stage)) {
    if (!current_outputs(config, dep, config.stage_hash(dep))) {
      throw StageFailure(stage, Error(ErrorCode::IncompleteRun, "upstream stage '" + dep +
                                                                    "' has no current outputs; run it first"));
    }
  }
  auto record = execute_stage(config, stage, config.stage_hash(stage), options);

  // The manifest lists every stage whose outputs are current for this config.
  std::map<std::string, StageRecord> previous;
  if (fs::exists(config.out_dir / "manifest.json")) {
    try {
      for (auto& s : RunManifest::load(config.out_dir).stages) previous[s.name] = std::move(s);
    } catch (const Error&) {
    }
  }
  RunManifest manifest{config.hash(), TRAJLAB_VERSION, config.out_dir, {}};
  for (const auto& name : stage_names()) {
    if (name == stage) {
      manifest.stages.push_back(record);
    } else if (auto outputs = current_outputs(config, name, config.stage_hash(name))) {
      StageRecord rec;
      if (previous.count(name)) rec = previous[name];
      rec.name = name;
      rec.outputs = std::move(*outputs);
      manifest.stages.push_back(std::move(rec));
    }
  }
  save_manifest(manifest);
  return record;
}

std::vector<ReportFile> report(const RunManifest& manifest) {
  struct Entry {
    const char* plot;
    const char* name;
    const char* stage;
    const char* source;
  };
  static const Entry entries[] = {
      {"validation_ppl", "validation_ppl.csv", "dump", "dump/validation_ppl.csv"},
      {"trend_populations", "trend_populations.csv", "trends", "trends/populations.csv"},
      {"subset_trajectories", "subset_trajectories.csv", "trends", "trends/subset_trajectories.csv"},
      {"generated_final_ppl", "generated_final_ppl.csv", "sweep", "sweep/generated_final_ppl.csv"},
      {"generated_trajectories", "generated_trajectories.csv", "sweep", "sweep/generated_trajectories.csv"},
      {"corruption_ppl", "corruption_ppl.csv", "sweep", "sweep/corruption_ppl.csv"},
      {"icl_accuracy", "icl_accuracy.csv", "icl", "icl/accuracy_by_checkpoint.csv"},
      {"option_ppl", "option_ppl.csv", "icl", "icl/results.csv"},
      {"scaling_metrics", "scaling_metrics.csv", "scaling", "scaling/metrics.csv"},
  };
  for (const auto& name : stage_names()) {
    auto it = std::find_if(manifest.stages.begin(), manifest.stages.end(),
                           [&](const StageRecord& s) { return s.name == name; });
    if (it == manifest.stages.end()) throw Error(ErrorCode::IncompleteRun, "stage '" + name + "' has not run");
    for (const auto& o : it->outputs) {
      if (!fs::exists(manifest.out_dir / o)) throw Error(ErrorCode::IncompleteRun, "missing stage output " + o);
    }
  }
  const auto dir = manifest.out_dir / "report";
  fs::create_directories(dir);
  std::vector<ReportFile> files;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& e : entries) {
    const auto src = manifest.out_dir / e.source;
    if (!fs::exists(src)) throw Error(ErrorCode::IncompleteRun, std::string("missing stage output ") + e.source);
    fs::copy_file(src, dir / e.name, fs::copy_options::overwrite_existing);
    files.push_back({e.plot, (fs::path("report") / e.name).generic_string(), e.source});
    index.push_back({{"plot", e.plot}, {"file", e.name}, {"source", e.source}, {"stage", e.stage}});
  }
  std::ofstream(dir / "index.json", std::ios::binary) << nlohmann::json{{"config_hash", manifest.config_hash},
                                                                         {"files", index}}
                                                             .dump(1)
                                                      << '\n';
  return files;
}

}  // namespace trajlab
