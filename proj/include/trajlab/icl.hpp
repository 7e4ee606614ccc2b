// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajlab/backend.hpp"
#include "trajlab/corpus.hpp"

namespace trajlab {

struct MultipleChoiceInstance {
  std::string stem;
  std::vector<std::string> options;
  std::size_t correct = 0;
};

struct Task {
  std::string name;
  std::vector<MultipleChoiceInstance> instances;
};

/// {name, instances: [{stem, options: [...], correct}]}. Validates that every
/// instance has >= 2 distinct options and an in-range correct index.
Task parse_task(const nlohmann::json& j);
Task load_task(const std::filesystem::path& path);

// Placeholders: {stem} and {answer}. The query is the exemplar template cut
// at {answer}, so the separator before the answer stays in the context.
struct PromptTemplate {
  std::string exemplar = "{stem}\nA: {answer}\n";

  std::string render_exemplar(const MultipleChoiceInstance& inst) const;
  std::string render_query(const MultipleChoiceInstance& inst) const;
};

struct FewShotPrompt {
  std::vector<std::size_t> exemplars;  // instance indices, in prompt order
  std::size_t eval_index = 0;
  std::string text;
};

/// k exemplars drawn without replacement from every instance but
/// `eval_index`, in seed-determined order, followed by the query.
/// Throws InsufficientExemplars when the task has fewer than k+1 instances.
FewShotPrompt render_prompt(const Task& task, std::size_t eval_index, std::size_t k, std::uint64_t seed,
                            const PromptTemplate& tmpl = {});

// Anything that can score a continuation given a context.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  /// log P(continuation[i] | context, continuation[<i]) for each i.
  virtual std::vector<double> continuation_log_probs(std::span<const TokenId> context,
                                                     std::span<const TokenId> continuation) const = 0;
};

// Scores through one checkpoint of a model series.
class CheckpointScorer final : public SequenceScorer {
 public:
  CheckpointScorer(const LanguageModelSeries& series, std::size_t checkpoint);
  std::vector<double> continuation_log_probs(std::span<const TokenId> context,
                                             std::span<const TokenId> continuation) const override;

 private:
  const LanguageModelSeries& series_;
  std::size_t checkpoint_;
};

struct OptionScore {
  std::size_t option_index = 0;
  double total_log_prob = 0.0;
  std::size_t token_count = 0;
  double normalized = 0.0;  // total_log_prob / token_count
  double perplexity = 0.0;  // exp(-normalized)
};

struct OptionScoring {
  std::vector<OptionScore> scores;
  std::size_t predicted = 0;  // argmax of normalized, smallest index on ties
};

/// Throws EmptyOption when an option tokenizes to nothing.
OptionScoring score_options(const SequenceScorer& scorer, const Vocabulary& vocab, const Task& task,
                            const FewShotPrompt& prompt);

/// Argmax with smallest-index tie-break.
std::size_t argmax_index(std::span<const double> values);

struct InstanceRecord {
  std::size_t instance = 0;
  std::vector<std::size_t> exemplars;
  OptionScoring scoring;
  bool correct = false;
};

struct TaskEvaluation {
  std::string task;
  double accuracy = 0.0;
  std::vector<InstanceRecord> records;
};

/// Per-instance seeds are derived from (seed, instance index), so results do
/// not depend on evaluation order. Throws EmptyTask for a task without instances.
TaskEvaluation evaluate_task(const SequenceScorer& scorer, const Vocabulary& vocab, const Task& task,
                             std::size_t k, std::uint64_t seed, const PromptTemplate& tmpl = {},
                             std::size_t jobs = 1);

struct OptionTrajectoryRow {
  CheckpointMeta checkpoint;
  double accuracy = 0.0;
  double mean_correct_ppl = 0.0;    // pooled over gold options' tokens
  double mean_incorrect_ppl = 0.0;  // pooled over the other options' tokens
};

/// Pooled exp(-sum log p / sum tokens) over the given option scores.
double pooled_option_perplexity(std::span<const OptionScore> scores);

OptionTrajectoryRow summarize_evaluation(const TaskEvaluation& eval, const Task& task,
                                         const CheckpointMeta& checkpoint);

std::vector<OptionTrajectoryRow> option_ppl_trajectory(const LanguageModelSeries& series, const Vocabulary& vocab,
                                                       const Task& task, std::size_t k, std::uint64_t seed,
                                                       const PromptTemplate& tmpl = {}, std::size_t jobs = 1);

/// Every distinct token of every stem and option, interned into `vocab`.
void intern_task_tokens(const Task& task, Vocabulary& vocab, const PromptTemplate& tmpl = {});

}  // namespace trajlab
