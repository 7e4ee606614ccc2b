// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "trajlab/error.hpp"
#include "trajlab/rng.hpp"

namespace trajlab {
namespace {

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

template <typename Emit>
void split_tokens(std::string_view text, TokenizePolicy policy, Emit&& emit) {
  if (policy == TokenizePolicy::Byte) {
    for (char c : text) {
      emit(std::string_view(&c, 1));
    }
    return;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) emit(text.substr(i, j - i));
    i = j;
  }
}

}  // namespace

std::string_view to_string(TokenizePolicy policy) noexcept {
  return policy == TokenizePolicy::Byte ? "byte" : "whitespace";
}

TokenizePolicy parse_policy(std::string_view name) {
  if (name == "whitespace") return TokenizePolicy::Whitespace;
  if (name == "byte") return TokenizePolicy::Byte;
  throw Error(ErrorCode::InvalidArgument, "unknown tokenize policy '" + std::string(name) + "'");
}

TokenId Vocabulary::intern(std::string_view token) {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[id];
}

void Vocabulary::set_end_of_document(TokenId id) {
  if (id >= tokens_.size()) {
    throw Error(ErrorCode::UnknownToken, "end-of-document id outside vocabulary");
  }
  eod_ = id;
}

// Byte vocabularies are stored as integer byte values so the JSON stays valid
// UTF-8 regardless of content.
nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j;
  j["policy"] = std::string(to_string(policy_));
  auto& toks = j["tokens"] = nlohmann::json::array();
  for (const auto& t : tokens_) {
    if (policy_ == TokenizePolicy::Byte) {
      toks.push_back(static_cast<unsigned char>(t.front()));
    } else {
      toks.push_back(t);
    }
  }
  j["end_of_document"] = eod_ ? nlohmann::json(*eod_) : nlohmann::json(nullptr);
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary vocab(parse_policy(j.at("policy").get<std::string>()));
  for (const auto& t : j.at("tokens")) {
    std::string token = vocab.policy() == TokenizePolicy::Byte
                            ? std::string(1, static_cast<char>(t.get<int>()))
                            : t.get<std::string>();
    if (vocab.find(token)) throw Error(ErrorCode::ParseError, "duplicate vocabulary entry");
    vocab.intern(token);
  }
  if (j.contains("end_of_document") && !j["end_of_document"].is_null()) {
    vocab.set_end_of_document(j["end_of_document"].get<TokenId>());
  }
  return vocab;
}

Document tokenize(std::string_view text, Vocabulary& vocab, std::string id) {
  Document doc{std::move(id), {}};
  split_tokens(text, vocab.policy(), [&](std::string_view tok) { doc.tokens.push_back(vocab.intern(tok)); });
  if (doc.tokens.empty()) throw Error(ErrorCode::EmptyInput, "text has no tokens");
  return doc;
}

Document encode(std::string_view text, const Vocabulary& vocab, std::string id) {
  Document doc{std::move(id), {}};
  split_tokens(text, vocab.policy(), [&](std::string_view tok) {
    auto found = vocab.find(tok);
    if (!found) throw Error(ErrorCode::UnknownToken, "'" + std::string(tok) + "' not in vocabulary");
    doc.tokens.push_back(*found);
  });
  if (doc.tokens.empty()) throw Error(ErrorCode::EmptyInput, "text has no tokens");
  return doc;
}

std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::string out;
  const bool spaced = vocab.policy() == TokenizePolicy::Whitespace;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (spaced && i > 0) out.push_back(' ');
    out += vocab.token(tokens[i]);
  }
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  split_tokens(text, TokenizePolicy::Whitespace, [&](std::string_view tok) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  });
  return out;
}

std::vector<Document> tokenize_lines(std::span<const std::string> lines, Vocabulary& vocab,
                                     const CorpusOptions& options) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (normalize_whitespace(line).empty() && vocab.policy() == TokenizePolicy::Whitespace) continue;
    if (line.empty()) continue;
    Document doc = tokenize(line, vocab, options.id_prefix + ":" + std::to_string(i + 1));
    if (options.max_len > 0 && doc.tokens.size() > options.max_len) doc.tokens.resize(options.max_len);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> load_corpus(const std::filesystem::path& path, Vocabulary& vocab,
                                  const CorpusOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open corpus " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  auto docs = tokenize_lines(lines, vocab, options);
  if (docs.empty()) throw Error(ErrorCode::EmptyInput, "corpus " + path.string() + " has no documents");
  return docs;
}

std::size_t corruption_count(double rate, std::size_t length) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(length)));
}

CorruptionResult corrupt_with_positions(const Document& doc, const CorruptionSpec& spec,
                                        const Vocabulary& vocab) {
  if (doc.tokens.empty()) throw Error(ErrorCode::EmptyInput, "cannot corrupt an empty document");
  if (!(spec.rate >= 0.0 && spec.rate <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "corruption rate must lie in [0,1]");
  }
  if (vocab.empty()) throw Error(ErrorCode::InvalidArgument, "empty vocabulary");

  const std::size_t n = doc.tokens.size();
  const std::size_t count = corruption_count(spec.rate, n);
  Rng rng(spec.seed);

  // Partial Fisher-Yates: the first `count` slots are a uniform sample
  // without replacement.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.below(n - i)]);
  }
  CorruptionResult result{doc, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count)}};
  std::sort(result.replaced_positions.begin(), result.replaced_positions.end());
  for (std::size_t pos : result.replaced_positions) {
    result.document.tokens[pos] = static_cast<TokenId>(rng.below(vocab.size()));
  }
  return result;
}

Document corrupt(const Document& doc, const CorruptionSpec& spec, const Vocabulary& vocab) {
  return corrupt_with_positions(doc, spec, vocab).document;
}

void write_corrupted_corpus(const std::filesystem::path& path,
                            std::span<const CorruptionResult> results,
                            std::span<const CorruptionSpec> specs, const Vocabulary& vocab,
                            std::size_t length_cap) {
  if (results.size() != specs.size()) {
    throw Error(ErrorCode::InvalidArgument, "one corruption spec per document required");
  }
  std::ofstream text(path, std::ios::binary);
  if (!text) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  nlohmann::json manifest;
  manifest["applied_after_length_cap"] = true;
  manifest["length_cap"] = length_cap;
  manifest["mode"] = "exact_count";
  auto& docs = manifest["documents"] = nlohmann::json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    text << detokenize(results[i].document.tokens, vocab) << '\n';
    docs.push_back({{"doc_id", results[i].document.id},
                    {"rate", specs[i].rate},
                    {"seed", specs[i].seed},
                    {"replaced_positions", results[i].replaced_positions}});
  }
  std::ofstream side(path.string() + ".manifest.json", std::ios::binary);
  if (!side) throw Error(ErrorCode::IoError, "cannot write manifest for " + path.string());
  side << manifest.dump(1) << '\n';
}

Document extract_prompt(const Document& doc, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "prompt length must be >= 1");
  if (doc.tokens.size() < n) {
    throw Error(ErrorCode::InsufficientLength, "document " + doc.id + " has " +
                                                   std::to_string(doc.tokens.size()) +
                                                   " tokens, prompt needs " + std::to_string(n));
  }
  return Document{doc.id + "#prompt", {doc.tokens.begin(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(n)}};
}

}  // namespace trajlab
