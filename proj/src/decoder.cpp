// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "trajlab/error.hpp"

namespace trajlab {
namespace {

void check_same_support(const NextTokenDistribution& a, const NextTokenDistribution& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::InvalidArgument, "distributions cover different vocabularies (" +
                                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

// lambda_s * p_s + lambda_l * p_l, before clamping.
std::vector<double> mix(const NextTokenDistribution& p_s, const NextTokenDistribution& p_l, double lambda_s,
                        double lambda_l) {
  check_same_support(p_s, p_l);
  std::vector<double> scores(p_s.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = lambda_s * p_s.probs[i] + lambda_l * p_l.probs[i];
  return scores;
}

NextTokenDistribution renormalize(std::vector<double> scores) {
  double mass = 0.0;
  for (double s : scores) {
    if (s > 0.0) mass += s;
  }
  if (!(mass > 0.0)) {
    throw Error(ErrorCode::DegenerateDistribution, "no token keeps positive mass after interpolation");
  }
  for (double& s : scores) s = s > 0.0 ? s / mass : 0.0;
  return NextTokenDistribution{std::move(scores)};
}

TokenId argmax(std::span<const double> scores) {
  TokenId best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = static_cast<TokenId>(i);
  }
  return best;
}

// First id in `ids` (ascending) whose running mass exceeds u * total.
TokenId sample_in_id_order(const NextTokenDistribution& dist, std::span<const TokenId> ids, Rng& rng) {
  double total = 0.0;
  for (TokenId id : ids) total += dist.probs[id];
  const double target = rng.uniform01() * total;
  double running = 0.0;
  TokenId last_positive = ids.front();
  for (TokenId id : ids) {
    if (dist.probs[id] <= 0.0) continue;
    running += dist.probs[id];
    last_positive = id;
    if (target < running) return id;
  }
  return last_positive;
}

}  // namespace

std::string_view to_string(Strategy s) noexcept { return s == Strategy::Greedy ? "greedy" : "nucleus"; }

Strategy parse_strategy(std::string_view name) {
  if (name == "greedy") return Strategy::Greedy;
  if (name == "nucleus") return Strategy::Nucleus;
  throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

void DecodeConfig::validate() const {
  auto in_range = [](double v) { return v >= -1.0 && v <= 1.0; };
  if (!in_range(lambda_s)) throw Error(ErrorCode::InvalidArgument, "lambda_s must lie in [-1, 1]");
  if (!in_range(lambda_l)) throw Error(ErrorCode::InvalidArgument, "lambda_l must lie in [-1, 1]");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "top_p must lie in (0, 1]");
}

NextTokenDistribution interpolate(const NextTokenDistribution& p_s, const NextTokenDistribution& p_l,
                                  double lambda_s, double lambda_l) {
  return renormalize(mix(p_s, p_l, lambda_s, lambda_l));
}

TokenId greedy_pick(const NextTokenDistribution& dist) {
  if (dist.probs.empty()) throw Error(ErrorCode::EmptyInput, "empty distribution");
  return argmax(dist.probs);
}

TokenId ancestral_pick(const NextTokenDistribution& dist, Rng& rng) {
  if (dist.probs.empty()) throw Error(ErrorCode::EmptyInput, "empty distribution");
  std::vector<TokenId> ids(dist.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  return sample_in_id_order(dist, ids, rng);
}

TokenId nucleus_pick(const NextTokenDistribution& dist, double top_p, Rng& rng) {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "top_p must lie in (0, 1]");
  if (top_p >= 1.0) return ancestral_pick(dist, rng);
  std::vector<TokenId> order;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist.probs[i] > 0.0) order.push_back(static_cast<TokenId>(i));
  }
  if (order.empty()) throw Error(ErrorCode::DegenerateDistribution, "distribution has no mass");
  std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return dist.probs[a] != dist.probs[b] ? dist.probs[a] > dist.probs[b] : a < b;
  });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += dist.probs[order[keep++]];
    if (mass >= top_p) break;
  }
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return sample_in_id_order(dist, order, rng);
}

Document GenerationRecord::full_text() const {
  Document doc{prompt.id + "#gen", prompt.tokens};
  doc.tokens.insert(doc.tokens.end(), generated.begin(), generated.end());
  return doc;
}

GenerationRecord decode(ModelRef small, ModelRef large, const Document& prompt, const DecodeConfig& cfg,
                        std::optional<TokenId> end_of_document) {
  cfg.validate();
  if (small.series == nullptr || large.series == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "decode needs two models");
  }
  for (const auto* s : {small.series, large.series}) {
    if (!s->supports_distributions()) {
      throw Error(ErrorCode::CapabilityUnsupported, s->model_id() + " cannot produce next-token distributions");
    }
  }
  if (prompt.tokens.empty()) throw Error(ErrorCode::EmptyInput, "empty prompt");

  GenerationRecord rec{prompt, {}, cfg, {}, false, "max_new_tokens"};
  Rng rng(cfg.seed);
  std::vector<TokenId> context = prompt.tokens;
  while (rec.generated.size() < cfg.max_new_tokens) {
    const auto p_s = small.series->next_token_dist(small.checkpoint, context);
    const auto p_l = large.series->next_token_dist(large.checkpoint, context);
    auto scores = mix(p_s, p_l, cfg.lambda_s, cfg.lambda_l);
    TokenId token = 0;
    NextTokenDistribution p_prime;
    try {
      if (cfg.strategy == Strategy::Greedy) {
        // Argmax of the raw scores; renormalizing cannot change it.
        std::vector<double> masked = scores;
        for (double& s : masked) s = s > 0.0 ? s : 0.0;
        p_prime = renormalize(std::move(scores));
        token = argmax(masked);
      } else {
        p_prime = renormalize(std::move(scores));
        token = nucleus_pick(p_prime, cfg.top_p, rng);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateDistribution) throw;
      rec.terminated_early = true;
      rec.termination = "degenerate_distribution";
      break;
    }
    rec.generated.push_back(token);
    rec.steps.push_back({token, p_s[token], p_l[token], p_prime[token]});
    context.push_back(token);
    if (end_of_document && token == *end_of_document) {
      rec.termination = "end_of_document";
      break;
    }
  }
  return rec;
}

nlohmann::json to_json(const GenerationRecord& record, const Vocabulary& vocab) {
  nlohmann::json j;
  j["prompt_id"] = record.prompt.id;
  j["prompt"] = detokenize(record.prompt.tokens, vocab);
  j["text"] = detokenize(record.generated, vocab);
  j["prompt_tokens"] = record.prompt.tokens;
  j["lambda_s"] = record.config.lambda_s;
  j["lambda_l"] = record.config.lambda_l;
  j["strategy"] = to_string(record.config.strategy);
  j["top_p"] = record.config.top_p;
  j["seed"] = record.config.seed;
  j["terminated_early"] = record.terminated_early;
  j["termination"] = record.termination;
  auto& steps = j["per_step"] = nlohmann::json::array();
  for (const auto& s : record.steps) {
    steps.push_back({{"tok", s.token}, {"ps", s.ps}, {"pl", s.pl}, {"pprime", s.pprime}});
  }
  return j;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "spearman needs equal lengths");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  auto ranks = [n](std::span<const double> v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

SweepResult scaling_sweep(const Document& text, std::span<const LanguageModelSeries* const> series,
                          std::size_t first_scored) {
  const ScoredText one{text, first_scored};
  return scaling_sweep(std::span<const ScoredText>(&one, 1), series);
}

SweepResult scaling_sweep(std::span<const ScoredText> texts, std::span<const LanguageModelSeries* const> series) {
  if (series.empty()) throw Error(ErrorCode::EmptyInput, "no models to sweep");
  if (texts.empty()) throw Error(ErrorCode::EmptyInput, "no texts to sweep");
  SweepResult result;
  std::vector<double> capacity;
  std::vector<double> ppl;
  for (const auto* s : series) {
    SweepRow row{s->model_id(), s->checkpoints().back().params, 0.0, {}};
    for (std::size_t c = 0; c < s->num_checkpoints(); ++c) {
      double total = 0.0;
      std::size_t count = 0;
      for (const auto& t : texts) {
        const auto r = perplexity(*s, c, t.doc, t.first_scored);
        total += r.total_log_prob;
        count += r.count;
      }
      row.trajectory.push_back(std::exp(-total / static_cast<double>(count)));
    }
    row.final_ppl = row.trajectory.back();
    capacity.push_back(static_cast<double>(row.params));
    ppl.push_back(row.final_ppl);
    result.rows.push_back(std::move(row));
  }
  result.spearman_rho = spearman(capacity, ppl);
  result.spearman_sign = (result.spearman_rho > 0) - (result.spearman_rho < 0);
  return result;
}

}  // namespace trajlab
