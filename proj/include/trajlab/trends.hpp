// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trajlab/backend.hpp"

namespace trajlab {

enum class TrendLabel { Stagnated = 0, Upward = 1, Downward = 2, Unclassified = 3 };
inline constexpr std::size_t kNumTrendLabels = 4;

std::string_view to_string(TrendLabel label) noexcept;
TrendLabel parse_trend_label(std::string_view name);

// One context-token pair with its perplexity at every checkpoint.
struct TokenObservation {
  std::string doc_id;
  std::size_t position = 0;
  TokenId token = 0;
  std::vector<double> ppl_series;
};

struct TrendConfig {
  double p_threshold = 0.05;
  double band_low = 0.95;
  double band_high = 1.05;
};

struct SeriesFit {
  double alpha = 0.0;
  double beta = 0.0;
  double p_value = 1.0;
};

/// Fits ppl[i] / ppl[start] = alpha + beta * (i - start) over i in [start, n).
/// Throws WindowTooShort when fewer than 3 points remain.
SeriesFit fit_series(std::span<const double> ppl_series, std::size_t start);
SeriesFit fit_series(const TokenObservation& obs, std::size_t start);

struct TrendVerdict {
  TrendLabel label = TrendLabel::Unclassified;
  std::size_t start_index = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double p_value = 1.0;
  double ppl_avg = 0.0;  // geometric mean over the window
};

TrendVerdict classify(std::span<const double> ppl_series, std::size_t start, const TrendConfig& cfg = {});
TrendVerdict classify(const TokenObservation& obs, std::size_t start, const TrendConfig& cfg = {});

/// Peak checkpoint index if the series rises then falls: some k in
/// (start, n-1) is Upward on [start, k] and Downward on [k, n-1]. Among all
/// such k the one with the highest perplexity is returned (smallest on ties).
/// Needs a window of at least 5 points.
std::optional<std::size_t> double_descent_peak(std::span<const double> ppl_series, std::size_t start,
                                               const TrendConfig& cfg = {});

/// Smallest checkpoint index whose tokens_seen is at least `percent`% of the
/// final checkpoint's. `percent` must lie in (0, 90].
std::size_t start_index_for_fraction(std::span<const CheckpointMeta> checkpoints, double percent);

std::vector<TokenObservation> observations(const LogProbTable& table);

struct TrendPopulation {
  double start_percent = 0.0;
  std::size_t start_index = 0;
  std::size_t total = 0;
  std::array<std::size_t, kNumTrendLabels> counts{};
  std::array<double, kNumTrendLabels> fractions{};

  std::size_t count(TrendLabel l) const { return counts[static_cast<std::size_t>(l)]; }
  double fraction(TrendLabel l) const { return fractions[static_cast<std::size_t>(l)]; }
};

struct TrendAnalysis {
  TrendPopulation population;
  std::vector<TrendVerdict> verdicts;  // aligned with the table's keys
};

TrendAnalysis analyze_trends(const LogProbTable& table, double start_percent, const TrendConfig& cfg = {},
                             std::size_t jobs = 1);
TrendPopulation population(const LogProbTable& table, double start_percent, const TrendConfig& cfg = {},
                           std::size_t jobs = 1);

// Tokens selected from one model, to be followed in another.
struct SubsetSelection {
  std::string selector_model;
  TrendLabel label = TrendLabel::Stagnated;
  double start_percent = 0.0;
  std::vector<TokenKey> keys;
  std::size_t universe = 0;
  double fraction = 0.0;  // keys.size() / universe
};

/// Throws EmptySelection when no token carries `label`.
SubsetSelection select_subset(const LogProbTable& selector, double start_percent, TrendLabel label,
                              const TrendConfig& cfg = {}, std::size_t jobs = 1);

struct SubsetTrajectoryPoint {
  CheckpointMeta checkpoint;
  double subset_ppl = 0.0;  // pooled over the selected tokens
};

/// Follows the selected tokens through every checkpoint of `evaluator`.
/// Throws AlignmentError unless both tables cover the same universe.
std::vector<SubsetTrajectoryPoint> evaluate_subset(const LogProbTable& evaluator, const SubsetSelection& selection);

nlohmann::json verdicts_to_json(const LogProbTable& table, std::span<const TrendVerdict> verdicts);
void write_verdicts_csv(const std::filesystem::path& path, const LogProbTable& table,
                        std::span<const TrendVerdict> verdicts);

}  // namespace trajlab
