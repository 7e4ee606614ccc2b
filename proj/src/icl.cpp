// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/icl.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "trajlab/error.hpp"
#include "trajlab/parallel.hpp"
#include "trajlab/rng.hpp"

namespace trajlab {
namespace {

constexpr std::string_view kStem = "{stem}";
constexpr std::string_view kAnswer = "{answer}";

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  for (std::size_t pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

}  // namespace

Task parse_task(const nlohmann::json& j) {
  try {
    Task task;
    task.name = j.at("name").get<std::string>();
    const auto& instances = j.at("instances");
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& e = instances[i];
      MultipleChoiceInstance inst{e.at("stem").get<std::string>(), e.at("options").get<std::vector<std::string>>(),
                                  e.at("correct").get<std::size_t>()};
      const std::string where = task.name + ".instances[" + std::to_string(i) + "]";
      if (inst.options.size() < 2) throw Error(ErrorCode::ParseError, where + ": needs at least 2 options");
      if (inst.correct >= inst.options.size()) throw Error(ErrorCode::ParseError, where + ": correct out of range");
      if (std::set<std::string>(inst.options.begin(), inst.options.end()).size() != inst.options.size()) {
        throw Error(ErrorCode::ParseError, where + ": options must be distinct");
      }
      task.instances.push_back(std::move(inst));
    }
    return task;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed task: ") + e.what());
  }
}

Task load_task(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open task " + path.string());
  try {
    return parse_task(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

std::string PromptTemplate::render_exemplar(const MultipleChoiceInstance& inst) const {
  return replace_all(replace_all(exemplar, kStem, inst.stem), kAnswer, inst.options.at(inst.correct));
}

std::string PromptTemplate::render_query(const MultipleChoiceInstance& inst) const {
  const auto cut = exemplar.find(kAnswer);
  if (cut == std::string::npos) throw Error(ErrorCode::InvalidArgument, "template lacks {answer}");
  return replace_all(exemplar.substr(0, cut), kStem, inst.stem);
}

FewShotPrompt render_prompt(const Task& task, std::size_t eval_index, std::size_t k, std::uint64_t seed,
                            const PromptTemplate& tmpl) {
  if (eval_index >= task.instances.size()) {
    throw Error(ErrorCode::InvalidArgument, "evaluation index outside task " + task.name);
  }
  if (task.instances.size() < k + 1) {
    throw Error(ErrorCode::InsufficientExemplars, task.name + " has " + std::to_string(task.instances.size()) +
                                                      " instances; " + std::to_string(k) + "-shot needs " +
                                                      std::to_string(k + 1));
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < task.instances.size(); ++i) {
    if (i != eval_index) pool.push_back(i);
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  FewShotPrompt prompt;
  prompt.eval_index = eval_index;
  prompt.exemplars.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t idx : prompt.exemplars) prompt.text += tmpl.render_exemplar(task.instances[idx]);
  prompt.text += tmpl.render_query(task.instances[eval_index]);
  return prompt;
}

CheckpointScorer::CheckpointScorer(const LanguageModelSeries& series, std::size_t checkpoint)
    : series_(series), checkpoint_(checkpoint) {
  series_.checkpoint(checkpoint_);
}

std::vector<double> CheckpointScorer::continuation_log_probs(std::span<const TokenId> context,
                                                             std::span<const TokenId> continuation) const {
  std::vector<TokenId> running(context.begin(), context.end());
  std::vector<double> out;
  out.reserve(continuation.size());
  for (TokenId tok : continuation) {
    out.push_back(series_.token_log_prob(checkpoint_, running, tok));
    running.push_back(tok);
  }
  return out;
}

std::size_t argmax_index(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "argmax of empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

OptionScoring score_options(const SequenceScorer& scorer, const Vocabulary& vocab, const Task& task,
                            const FewShotPrompt& prompt) {
  const auto& inst = task.instances.at(prompt.eval_index);
  const Document context = encode(prompt.text, vocab, task.name + "#context");
  OptionScoring result;
  std::vector<double> normalized;
  for (std::size_t o = 0; o < inst.options.size(); ++o) {
    Document option;
    try {
      option = encode(inst.options[o], vocab);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyInput) throw;
      throw Error(ErrorCode::EmptyOption, task.name + " option " + std::to_string(o) + " has no tokens");
    }
    const auto lps = scorer.continuation_log_probs(context.tokens, option.tokens);
    OptionScore s;
    s.option_index = o;
    s.total_log_prob = std::accumulate(lps.begin(), lps.end(), 0.0);
    s.token_count = option.tokens.size();
    s.normalized = s.total_log_prob / static_cast<double>(s.token_count);
    s.perplexity = std::exp(-s.normalized);
    normalized.push_back(s.normalized);
    result.scores.push_back(s);
  }
  result.predicted = argmax_index(normalized);
  return result;
}

TaskEvaluation evaluate_task(const SequenceScorer& scorer, const Vocabulary& vocab, const Task& task, std::size_t k,
                             std::uint64_t seed, const PromptTemplate& tmpl, std::size_t jobs) {
  if (task.instances.empty()) throw Error(ErrorCode::EmptyTask, task.name + " has no instances");
  TaskEvaluation eval;
  eval.task = task.name;
  eval.records.resize(task.instances.size());
  parallel_for(task.instances.size(), jobs, [&](std::size_t i) {
    const auto prompt = render_prompt(task, i, k, derive_seed(seed, i), tmpl);
    auto& rec = eval.records[i];
    rec.instance = i;
    rec.exemplars = prompt.exemplars;
    rec.scoring = score_options(scorer, vocab, task, prompt);
    rec.correct = rec.scoring.predicted == task.instances[i].correct;
  });
  std::size_t hits = 0;
  for (const auto& r : eval.records) hits += r.correct ? 1 : 0;
  eval.accuracy = static_cast<double>(hits) / static_cast<double>(eval.records.size());
  return eval;
}

double pooled_option_perplexity(std::span<const OptionScore> scores) {
  if (scores.empty()) throw Error(ErrorCode::EmptyInput, "no option scores to pool");
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : scores) {
    total += s.total_log_prob;
    tokens += s.token_count;
  }
  return std::exp(-total / static_cast<double>(tokens));
}

OptionTrajectoryRow summarize_evaluation(const TaskEvaluation& eval, const Task& task,
                                         const CheckpointMeta& checkpoint) {
  std::vector<OptionScore> correct;
  std::vector<OptionScore> incorrect;
  for (const auto& rec : eval.records) {
    const std::size_t gold = task.instances.at(rec.instance).correct;
    for (const auto& s : rec.scoring.scores) (s.option_index == gold ? correct : incorrect).push_back(s);
  }
  return OptionTrajectoryRow{checkpoint, eval.accuracy, pooled_option_perplexity(correct),
                             pooled_option_perplexity(incorrect)};
}

std::vector<OptionTrajectoryRow> option_ppl_trajectory(const LanguageModelSeries& series, const Vocabulary& vocab,
                                                       const Task& task, std::size_t k, std::uint64_t seed,
                                                       const PromptTemplate& tmpl, std::size_t jobs) {
  std::vector<OptionTrajectoryRow> rows;
  for (std::size_t c = 0; c < series.num_checkpoints(); ++c) {
    const CheckpointScorer scorer(series, c);
    const auto eval = evaluate_task(scorer, vocab, task, k, seed, tmpl, jobs);
    rows.push_back(summarize_evaluation(eval, task, series.checkpoint(c)));
  }
  return rows;
}

void intern_task_tokens(const Task& task, Vocabulary& vocab, const PromptTemplate& tmpl) {
  auto add = [&](const std::string& text) {
    try {
      tokenize(text, vocab);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyInput) throw;
    }
  };
  for (const auto& inst : task.instances) {
    add(tmpl.render_exemplar(inst));
    for (const auto& o : inst.options) add(o);
  }
}

}  // namespace trajlab
