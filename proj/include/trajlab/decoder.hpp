// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trajlab/backend.hpp"
#include "trajlab/rng.hpp"

namespace trajlab {

enum class Strategy { Greedy, Nucleus };

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

struct DecodeConfig {
  double lambda_s = 0.0;  // weight on the small model
  double lambda_l = 1.0;  // weight on the large model
  Strategy strategy = Strategy::Greedy;
  double top_p = 0.9;
  std::size_t max_new_tokens = 50;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument when a lambda leaves [-1, 1] or top_p leaves (0, 1].
  void validate() const;
};

/// p'_i = lambda_s * p_s(i) + lambda_l * p_l(i); entries with p'_i <= 0 are
/// dropped and the rest renormalized. Throws DegenerateDistribution when no
/// entry is positive.
NextTokenDistribution interpolate(const NextTokenDistribution& p_s, const NextTokenDistribution& p_l,
                                  double lambda_s, double lambda_l);

/// Argmax, smallest id on ties.
TokenId greedy_pick(const NextTokenDistribution& dist);

/// One uniform draw u; returns the first id (in id order) whose cumulative
/// mass exceeds u times the total.
TokenId ancestral_pick(const NextTokenDistribution& dist, Rng& rng);

/// Restricts to the smallest probability-sorted prefix whose mass reaches
/// top_p (ties broken by id), then samples it in id order with one draw. With
/// top_p >= 1 this is exactly ancestral_pick.
TokenId nucleus_pick(const NextTokenDistribution& dist, double top_p, Rng& rng);

struct ModelRef {
  const LanguageModelSeries* series = nullptr;
  std::size_t checkpoint = 0;
};

struct StepRecord {
  TokenId token = 0;
  double ps = 0.0;      // p_s(token)
  double pl = 0.0;      // p_l(token)
  double pprime = 0.0;  // renormalized interpolated probability
};

struct GenerationRecord {
  Document prompt;
  std::vector<TokenId> generated;
  DecodeConfig config;
  std::vector<StepRecord> steps;
  bool terminated_early = false;  // set when the interpolated distribution degenerated
  std::string termination;        // "max_new_tokens", "end_of_document" or "degenerate_distribution"

  /// Prompt followed by the generated tokens.
  Document full_text() const;
};

/// Generates up to cfg.max_new_tokens tokens from the interpolated
/// distribution. Both series must expose next_token_dist. `end_of_document`,
/// when set, stops generation after that token is emitted.
GenerationRecord decode(ModelRef small, ModelRef large, const Document& prompt, const DecodeConfig& cfg,
                        std::optional<TokenId> end_of_document = std::nullopt);

/// Newline-delimited JSON record: {prompt, text, lambda_s, lambda_l, strategy,
/// top_p, seed, terminated_early, per_step: [{tok, ps, pl, pprime}]}.
nlohmann::json to_json(const GenerationRecord& record, const Vocabulary& vocab);

struct SweepRow {
  std::string model_id;
  std::uint64_t params = 0;
  double final_ppl = 0.0;
  std::vector<double> trajectory;  // one aggregate perplexity per checkpoint
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double spearman_rho = 0.0;  // capacity (params) rank vs final perplexity
  int spearman_sign = 0;
};

// A text to evaluate; positions before first_scored (the prompt) only condition.
struct ScoredText {
  Document doc;
  std::size_t first_scored = 0;
};

/// Perplexity of `text` (positions >= first_scored) under every series, at
/// every checkpoint.
SweepResult scaling_sweep(const Document& text, std::span<const LanguageModelSeries* const> series,
                          std::size_t first_scored = 0);

/// As above, pooling token log-probabilities across all texts.
SweepResult scaling_sweep(std::span<const ScoredText> texts, std::span<const LanguageModelSeries* const> series);

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace trajlab
