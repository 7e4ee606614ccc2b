// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/trends.hpp"

#include <cmath>
#include <map>

#include "trajlab/csv.hpp"
#include "trajlab/error.hpp"
#include "trajlab/parallel.hpp"
#include "trajlab/stats.hpp"

namespace trajlab {
namespace {

void check_window(std::span<const double> series, std::size_t start, std::size_t min_points) {
  if (start >= series.size() || series.size() - start < min_points) {
    throw Error(ErrorCode::WindowTooShort, "window from checkpoint " + std::to_string(start) + " of " +
                                               std::to_string(series.size()) + " has fewer than " +
                                               std::to_string(min_points) + " points");
  }
  for (std::size_t i = start; i < series.size(); ++i) {
    if (!(series[i] > 0.0) || !std::isfinite(series[i])) {
      throw Error(ErrorCode::InvalidArgument, "perplexities must be positive and finite");
    }
  }
}

}  // namespace

std::string_view to_string(TrendLabel label) noexcept {
  switch (label) {
    case TrendLabel::Stagnated: return "stagnated";
    case TrendLabel::Upward: return "upward";
    case TrendLabel::Downward: return "downward";
    case TrendLabel::Unclassified: return "unclassified";
  }
  return "unclassified";
}

TrendLabel parse_trend_label(std::string_view name) {
  for (std::size_t i = 0; i < kNumTrendLabels; ++i) {
    if (to_string(static_cast<TrendLabel>(i)) == name) return static_cast<TrendLabel>(i);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown trend label '" + std::string(name) + "'");
}

SeriesFit fit_series(std::span<const double> ppl_series, std::size_t start) {
  check_window(ppl_series, start, 3);
  std::vector<double> normalized;
  normalized.reserve(ppl_series.size() - start);
  for (std::size_t i = start; i < ppl_series.size(); ++i) normalized.push_back(ppl_series[i] / ppl_series[start]);
  const auto line = stats::fit_line(normalized);
  return SeriesFit{line.alpha, line.beta, line.p_value};
}

SeriesFit fit_series(const TokenObservation& obs, std::size_t start) { return fit_series(obs.ppl_series, start); }

TrendVerdict classify(std::span<const double> ppl_series, std::size_t start, const TrendConfig& cfg) {
  const SeriesFit fit = fit_series(ppl_series, start);
  TrendVerdict v;
  v.start_index = start;
  v.alpha = fit.alpha;
  v.beta = fit.beta;
  v.p_value = fit.p_value;
  double log_sum = 0.0;
  for (std::size_t i = start; i < ppl_series.size(); ++i) log_sum += std::log(ppl_series[i]);
  v.ppl_avg = std::exp(log_sum / static_cast<double>(ppl_series.size() - start));

  if (fit.beta > 0.0 && fit.p_value < cfg.p_threshold) {
    v.label = TrendLabel::Upward;
  } else if (fit.beta < 0.0 && fit.p_value < cfg.p_threshold) {
    v.label = TrendLabel::Downward;
  } else {
    const double first = ppl_series[start] / v.ppl_avg;
    const double last = ppl_series.back() / v.ppl_avg;
    const bool in_band = first >= cfg.band_low && first <= cfg.band_high && last >= cfg.band_low &&
                         last <= cfg.band_high;
    v.label = in_band ? TrendLabel::Stagnated : TrendLabel::Unclassified;
  }
  return v;
}

TrendVerdict classify(const TokenObservation& obs, std::size_t start, const TrendConfig& cfg) {
  return classify(obs.ppl_series, start, cfg);
}

std::optional<std::size_t> double_descent_peak(std::span<const double> ppl_series, std::size_t start,
                                               const TrendConfig& cfg) {
  check_window(ppl_series, start, 5);
  const std::size_t n = ppl_series.size();
  std::optional<std::size_t> peak;
  // Both sub-windows need three points: k in [start+2, n-3].
  for (std::size_t k = start + 2; k + 3 <= n; ++k) {
    if (classify(ppl_series.first(k + 1), start, cfg).label != TrendLabel::Upward) continue;
    if (classify(ppl_series, k, cfg).label != TrendLabel::Downward) continue;
    if (!peak || ppl_series[k] > ppl_series[*peak]) peak = k;
  }
  return peak;
}

std::size_t start_index_for_fraction(std::span<const CheckpointMeta> checkpoints, double percent) {
  if (!(percent > 0.0 && percent <= 90.0)) {
    throw Error(ErrorCode::InvalidArgument, "start fraction must lie in (0, 90] percent");
  }
  if (checkpoints.empty()) throw Error(ErrorCode::InvalidArgument, "no checkpoints");
  const double threshold = percent / 100.0 * static_cast<double>(checkpoints.back().tokens_seen);
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (static_cast<double>(checkpoints[i].tokens_seen) >= threshold) return i;
  }
  return checkpoints.size() - 1;
}

std::vector<TokenObservation> observations(const LogProbTable& table) {
  std::vector<TokenObservation> out;
  out.reserve(table.keys.size());
  for (std::size_t i = 0; i < table.keys.size(); ++i) {
    TokenObservation obs{table.keys[i].doc, table.keys[i].pos, table.keys[i].tok, {}};
    obs.ppl_series.reserve(table.num_checkpoints());
    for (std::size_t c = 0; c < table.num_checkpoints(); ++c) obs.ppl_series.push_back(std::exp(-table.log_probs[c][i]));
    out.push_back(std::move(obs));
  }
  return out;
}

TrendAnalysis analyze_trends(const LogProbTable& table, double start_percent, const TrendConfig& cfg,
                             std::size_t jobs) {
  const std::size_t start = start_index_for_fraction(table.checkpoints, start_percent);
  if (table.num_checkpoints() - start < 3) {
    throw Error(ErrorCode::WindowTooShort, "start fraction " + format_double(start_percent) + "% maps to checkpoint " +
                                               std::to_string(start) + ", leaving fewer than 3 checkpoints");
  }
  TrendAnalysis result;
  result.population.start_percent = start_percent;
  result.population.start_index = start;
  result.population.total = table.keys.size();
  result.verdicts.resize(table.keys.size());
  parallel_for(table.keys.size(), jobs, [&](std::size_t i) {
    std::vector<double> series(table.num_checkpoints());
    for (std::size_t c = 0; c < series.size(); ++c) series[c] = std::exp(-table.log_probs[c][i]);
    result.verdicts[i] = classify(series, start, cfg);
  });
  for (const auto& v : result.verdicts) ++result.population.counts[static_cast<std::size_t>(v.label)];
  for (std::size_t l = 0; l < kNumTrendLabels; ++l) {
    result.population.fractions[l] = result.population.total == 0
                                         ? 0.0
                                         : static_cast<double>(result.population.counts[l]) /
                                               static_cast<double>(result.population.total);
  }
  return result;
}

TrendPopulation population(const LogProbTable& table, double start_percent, const TrendConfig& cfg,
                           std::size_t jobs) {
  return analyze_trends(table, start_percent, cfg, jobs).population;
}

SubsetSelection select_subset(const LogProbTable& selector, double start_percent, TrendLabel label,
                              const TrendConfig& cfg, std::size_t jobs) {
  const auto analysis = analyze_trends(selector, start_percent, cfg, jobs);
  SubsetSelection sel;
  sel.selector_model = selector.model_id;
  sel.label = label;
  sel.start_percent = start_percent;
  sel.universe = selector.keys.size();
  for (std::size_t i = 0; i < selector.keys.size(); ++i) {
    if (analysis.verdicts[i].label == label) sel.keys.push_back(selector.keys[i]);
  }
  if (sel.keys.empty()) {
    throw Error(ErrorCode::EmptySelection, "no " + std::string(to_string(label)) + " tokens in " + selector.model_id +
                                               " from " + format_double(start_percent) + "%");
  }
  sel.fraction = static_cast<double>(sel.keys.size()) / static_cast<double>(sel.universe);
  return sel;
}

std::vector<SubsetTrajectoryPoint> evaluate_subset(const LogProbTable& evaluator, const SubsetSelection& selection) {
  if (selection.keys.empty()) throw Error(ErrorCode::EmptySelection, "selection is empty");
  if (evaluator.keys.size() != selection.universe) {
    throw Error(ErrorCode::AlignmentError, evaluator.model_id + " covers " + std::to_string(evaluator.keys.size()) +
                                               " tokens, selection universe has " +
                                               std::to_string(selection.universe));
  }
  std::map<std::pair<std::string, std::size_t>, std::size_t> index;
  for (std::size_t i = 0; i < evaluator.keys.size(); ++i) {
    index.emplace(std::pair{evaluator.keys[i].doc, evaluator.keys[i].pos}, i);
  }
  std::vector<std::size_t> rows;
  rows.reserve(selection.keys.size());
  for (const auto& k : selection.keys) {
    auto it = index.find({k.doc, k.pos});
    if (it == index.end() || evaluator.keys[it->second].tok != k.tok) {
      throw Error(ErrorCode::AlignmentError,
                  "(" + k.doc + ", " + std::to_string(k.pos) + ") not aligned in " + evaluator.model_id);
    }
    rows.push_back(it->second);
  }
  std::vector<SubsetTrajectoryPoint> out;
  for (std::size_t c = 0; c < evaluator.num_checkpoints(); ++c) {
    std::vector<double> lps;
    lps.reserve(rows.size());
    for (std::size_t r : rows) lps.push_back(evaluator.log_probs[c][r]);
    out.push_back({evaluator.checkpoints[c], pooled_perplexity(lps)});
  }
  return out;
}

nlohmann::json verdicts_to_json(const LogProbTable& table, std::span<const TrendVerdict> verdicts) {
  if (verdicts.size() != table.keys.size()) throw Error(ErrorCode::InvalidArgument, "one verdict per key required");
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto& v = verdicts[i];
    out.push_back({{"doc", table.keys[i].doc},
                   {"pos", table.keys[i].pos},
                   {"tok", table.keys[i].tok},
                   {"label", to_string(v.label)},
                   {"alpha", v.alpha},
                   {"beta", v.beta},
                   {"p_value", v.p_value}});
  }
  return out;
}

void write_verdicts_csv(const std::filesystem::path& path, const LogProbTable& table,
                        std::span<const TrendVerdict> verdicts) {
  if (verdicts.size() != table.keys.size()) throw Error(ErrorCode::InvalidArgument, "one verdict per key required");
  CsvWriter csv(path, {"doc", "pos", "tok", "label", "alpha", "beta", "p_value", "start_index", "ppl_avg"});
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto& v = verdicts[i];
    csv.field(table.keys[i].doc)
        .field(static_cast<std::uint64_t>(table.keys[i].pos))
        .field(static_cast<std::uint64_t>(table.keys[i].tok))
        .field(to_string(v.label))
        .field(v.alpha)
        .field(v.beta)
        .field(v.p_value)
        .field(static_cast<std::uint64_t>(v.start_index))
        .field(v.ppl_avg);
    csv.end_row();
  }
}

}  // namespace trajlab
