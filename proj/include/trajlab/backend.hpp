// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajlab/corpus.hpp"

namespace trajlab {

struct CheckpointMeta {
  std::size_t index = 0;
  std::uint64_t step = 0;
  std::uint64_t tokens_seen = 0;
  double flops = 0.0;
  std::uint64_t params = 0;
};

/// Training compute estimate: 6 * params * tokens_seen.
double training_flops(std::uint64_t params, std::uint64_t tokens_seen) noexcept;
double flops(const CheckpointMeta& meta) noexcept;

// Dense over the vocabulary; probs[id] is the probability of token id.
struct NextTokenDistribution {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](TokenId id) const { return probs[id]; }
  /// True when every entry is >= 0 and the sum is within `tolerance` of 1.
  bool is_valid(double tolerance = 1e-9) const noexcept;
};

// A model observed at a sequence of checkpoints. Implementations are
// immutable after construction and safe to query concurrently.
class LanguageModelSeries {
 public:
  virtual ~LanguageModelSeries() = default;

  virtual const std::string& model_id() const noexcept = 0;
  virtual std::string_view backend_kind() const noexcept = 0;
  virtual const std::vector<CheckpointMeta>& checkpoints() const noexcept = 0;
  virtual std::size_t vocab_size() const noexcept = 0;
  virtual bool supports_distributions() const noexcept = 0;

  /// Throws NoSuchCheckpoint, or CapabilityUnsupported for log-prob-only series.
  virtual NextTokenDistribution next_token_dist(std::size_t checkpoint,
                                                std::span<const TokenId> context) const = 0;

  /// log P(doc[i] | doc[<i]) for every position of `doc`.
  virtual std::vector<double> token_log_probs(std::size_t checkpoint, const Document& doc) const = 0;

  /// log P(token | context). The default goes through next_token_dist.
  virtual double token_log_prob(std::size_t checkpoint, std::span<const TokenId> context,
                                TokenId token) const;

  std::size_t num_checkpoints() const noexcept { return checkpoints().size(); }
  const CheckpointMeta& checkpoint(std::size_t index) const;
  std::size_t final_checkpoint() const noexcept { return checkpoints().size() - 1; }
};

// Jelinek-Mercer weights: `uniform` on 1/|V| plus orders[k-1] on the k-gram
// maximum-likelihood estimate.
struct InterpolationWeights {
  double uniform = 0.0;
  std::vector<double> orders;

  /// `uniform_floor` on the uniform distribution, the rest split in
  /// proportion to k across orders 1..order.
  static InterpolationWeights defaults(std::size_t order, double uniform_floor = 0.01);
  static InterpolationWeights uniform_only(std::size_t order);

  /// Throws InvalidSmoothing on negative weights, a sum off 1 by more than
  /// 1e-9, or a size that does not match `order`.
  void validate(std::size_t order) const;
};

// Counts for one order and one context (the preceding k-1 tokens).
struct ContextCounts {
  std::uint64_t total = 0;
  std::map<TokenId, std::uint64_t> next;
};

// n-gram counts for orders 1..N; tables[k-1] is keyed by the k-1 token context.
struct NgramCounts {
  std::vector<std::map<std::vector<TokenId>, ContextCounts>> tables;

  explicit NgramCounts(std::size_t order = 0) : tables(order) {}
  void add_document(std::span<const TokenId> tokens);
  void merge(const NgramCounts& other);
  std::uint64_t distinct_ngrams() const noexcept;
  bool operator==(const NgramCounts& other) const;
};

// Interpolated n-gram language model with one count snapshot per checkpoint.
class NgramSeries final : public LanguageModelSeries {
 public:
  NgramSeries(std::string model_id, Vocabulary vocab, std::size_t order, InterpolationWeights weights,
              std::vector<CheckpointMeta> checkpoints, std::vector<NgramCounts> snapshots);

  const std::string& model_id() const noexcept override { return model_id_; }
  std::string_view backend_kind() const noexcept override { return "ngram"; }
  const std::vector<CheckpointMeta>& checkpoints() const noexcept override { return checkpoints_; }
  std::size_t vocab_size() const noexcept override { return vocab_.size(); }
  bool supports_distributions() const noexcept override { return true; }

  NextTokenDistribution next_token_dist(std::size_t checkpoint,
                                        std::span<const TokenId> context) const override;
  std::vector<double> token_log_probs(std::size_t checkpoint, const Document& doc) const override;
  double token_log_prob(std::size_t checkpoint, std::span<const TokenId> context,
                        TokenId token) const override;

  /// Bit-identical to next_token_dist(checkpoint, context)[token].
  double token_probability(std::size_t checkpoint, std::span<const TokenId> context, TokenId token) const;

  std::size_t order() const noexcept { return order_; }
  const InterpolationWeights& weights() const noexcept { return weights_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  const NgramCounts& counts(std::size_t checkpoint) const;

  // Snapshot format "trajlab-ngram" version 1.0 (see docs/formats.md).
  nlohmann::json to_json() const;
  static NgramSeries from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static NgramSeries load(const std::filesystem::path& path);

 private:
  // Per order k, the count table to use: the deepest order <= k whose context
  // was observed. Order 1 always exists.
  std::vector<const ContextCounts*> resolve(const NgramCounts& counts,
                                            std::span<const TokenId> context) const;
  const NgramCounts& snapshot(std::size_t checkpoint) const;

  std::string model_id_;
  Vocabulary vocab_;
  std::size_t order_;
  InterpolationWeights weights_;
  std::vector<CheckpointMeta> checkpoints_;
  std::vector<NgramCounts> snapshots_;
};

/// Trains on `shards` contiguous document groups; checkpoint k sees shards 1..k.
/// Throws InvalidSmoothing for bad weights, InvalidArgument for order < 1,
/// shards < 2 or fewer documents than shards.
NgramSeries train_ngram(std::string model_id, std::span<const Document> corpus, const Vocabulary& vocab,
                        std::size_t order, std::size_t shards, const InterpolationWeights& weights);

struct PerplexityResult {
  std::vector<double> per_token;  // 1 / P(token_i | tokens_<i) for scored positions
  double total_log_prob = 0.0;
  std::size_t count = 0;
  double aggregate = 0.0;  // exp(-total_log_prob / count)
};

/// Scores positions [first_scored, len). Throws ZeroProbability naming the
/// first position with probability zero.
PerplexityResult perplexity(const LanguageModelSeries& series, std::size_t checkpoint, const Document& doc,
                            std::size_t first_scored = 0);

/// Pooled over every token of every document, not averaged per document.
double corpus_perplexity(const LanguageModelSeries& series, std::size_t checkpoint,
                         std::span<const Document> docs);

/// exp(-sum / count) of the given log-probabilities.
double pooled_perplexity(std::span<const double> log_probs);

// Identifies a context-token pair: the token at `pos` of document `doc`.
struct TokenKey {
  std::string doc;
  std::size_t pos = 0;
  TokenId tok = 0;

  bool operator==(const TokenKey&) const = default;
};

// Per-checkpoint log-probabilities over a fixed universe of context-token pairs.
struct LogProbTable {
  std::string model_id;
  std::string backend_kind;
  std::vector<CheckpointMeta> checkpoints;
  std::vector<TokenKey> keys;
  std::vector<std::vector<double>> log_probs;  // [checkpoint][key]

  std::size_t num_checkpoints() const noexcept { return checkpoints.size(); }
};

/// Evaluates every position of every document at every checkpoint.
LogProbTable score_corpus(const LanguageModelSeries& series, std::span<const Document> docs,
                          std::size_t jobs = 1);

/// Throws AlignmentError naming the first (doc, pos) present in one table but
/// not the other, or whose token differs.
void check_aligned(const LogProbTable& a, const LogProbTable& b);

// One checkpoint's dump: newline-delimited {"doc","pos","tok","lp"} records
// plus a sidecar "<stem>.meta.json" holding {model_id, step, tokens_seen, params}.
std::filesystem::path dump_meta_path(const std::filesystem::path& dump);
void write_dump(const LogProbTable& table, std::size_t checkpoint, const std::filesystem::path& path);

// Log-prob-backed series (external models). Supports perplexity and trend
// analysis; next_token_dist throws CapabilityUnsupported.
class DumpSeries final : public LanguageModelSeries {
 public:
  explicit DumpSeries(LogProbTable table, std::size_t vocab_size);

  const std::string& model_id() const noexcept override { return table_.model_id; }
  std::string_view backend_kind() const noexcept override { return "dump"; }
  const std::vector<CheckpointMeta>& checkpoints() const noexcept override { return table_.checkpoints; }
  std::size_t vocab_size() const noexcept override { return vocab_size_; }
  bool supports_distributions() const noexcept override { return false; }

  NextTokenDistribution next_token_dist(std::size_t checkpoint,
                                        std::span<const TokenId> context) const override;
  std::vector<double> token_log_probs(std::size_t checkpoint, const Document& doc) const override;

  const LogProbTable& table() const noexcept { return table_; }

 private:
  LogProbTable table_;
  std::size_t vocab_size_;
  std::map<std::string, std::map<std::size_t, std::size_t>> index_;  // doc -> pos -> key index
};

/// Loads one dump file per checkpoint. Checkpoints are ordered by step, and
/// every file must cover the same (doc, pos) universe with the same tokens.
DumpSeries ingest_dump(std::span<const std::filesystem::path> files);

}  // namespace trajlab
