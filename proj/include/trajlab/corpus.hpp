// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace trajlab {

using TokenId = std::uint32_t;

enum class TokenizePolicy {
  Whitespace,  // split on ASCII whitespace; detokenize joins with one space
  Byte,        // one token per byte; lossless
};

std::string_view to_string(TokenizePolicy policy) noexcept;
TokenizePolicy parse_policy(std::string_view name);

// Dense, bijective token <-> id mapping. Ids are assigned in first-seen order.
class Vocabulary {
 public:
  explicit Vocabulary(TokenizePolicy policy = TokenizePolicy::Whitespace) : policy_(policy) {}

  TokenizePolicy policy() const noexcept { return policy_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }

  /// Returns the id of `token`, assigning the next dense id if it is new.
  TokenId intern(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::span<const std::string> tokens() const noexcept { return tokens_; }

  // No end-of-document token exists unless one is declared.
  std::optional<TokenId> end_of_document() const noexcept { return eod_; }
  void set_end_of_document(TokenId id);

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  TokenizePolicy policy_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::optional<TokenId> eod_;
};

struct Document {
  std::string id;
  std::vector<TokenId> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool operator==(const Document&) const = default;
};

/// Splits `text` under the vocabulary's policy, growing the vocabulary with
/// unseen tokens. Throws EmptyInput if no tokens result.
Document tokenize(std::string_view text, Vocabulary& vocab, std::string id = {});

/// Like tokenize, but against a frozen vocabulary; unseen tokens throw UnknownToken.
Document encode(std::string_view text, const Vocabulary& vocab, std::string id = {});

std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab);

/// The normalization Whitespace round-trips are exact up to: whitespace runs
/// collapse to one space and leading/trailing whitespace is dropped.
std::string normalize_whitespace(std::string_view text);

struct CorpusOptions {
  std::size_t max_len = 0;  // 0 = no cap; otherwise documents are truncated
  std::string id_prefix = "doc";
};

/// Reads one document per line. Blank lines are skipped but still advance the
/// line counter, so ids ("<prefix>:<line>") stay stable.
std::vector<Document> load_corpus(const std::filesystem::path& path, Vocabulary& vocab,
                                  const CorpusOptions& options = {});
std::vector<Document> tokenize_lines(std::span<const std::string> lines, Vocabulary& vocab,
                                     const CorpusOptions& options = {});

enum class CorruptionMode { ExactCount };

struct CorruptionSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
  CorruptionMode mode = CorruptionMode::ExactCount;
};

struct CorruptionResult {
  Document document;
  std::vector<std::size_t> replaced_positions;  // ascending
};

/// Number of positions selected for a document of `length` tokens.
std::size_t corruption_count(double rate, std::size_t length);

CorruptionResult corrupt_with_positions(const Document& doc, const CorruptionSpec& spec,
                                        const Vocabulary& vocab);
Document corrupt(const Document& doc, const CorruptionSpec& spec, const Vocabulary& vocab);

/// Writes the corrupted documents (one per line) and a sidecar manifest
/// `<path>.manifest.json` holding one {doc_id, rate, seed, replaced_positions}
/// entry per document.
void write_corrupted_corpus(const std::filesystem::path& path,
                            std::span<const CorruptionResult> results,
                            std::span<const CorruptionSpec> specs, const Vocabulary& vocab,
                            std::size_t length_cap);

/// First `n` tokens, id suffixed "#prompt".
Document extract_prompt(const Document& doc, std::size_t n);

}  // namespace trajlab
