// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "trajlab/corpus.hpp"
#include "trajlab/error.hpp"

using namespace trajlab;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected trajlab::Error");
  return ErrorCode::IoError;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fixture(const char* name) { return fs::path(TRAJLAB_SOURCE_DIR) / "data" / "corpus" / name; }

}  // namespace

TEST_CASE("whitespace ids follow first appearance") {
  Vocabulary v;
  const auto doc = tokenize("a b a", v, "d");
  CHECK(doc.tokens == std::vector<TokenId>{0, 1, 0});
  CHECK(v.size() == 2);
  CHECK(v.token(0) == "a");
  CHECK(v.token(1) == "b");
  CHECK(*v.find("b") == 1);
  CHECK_FALSE(v.find("c").has_value());
}

TEST_CASE("empty text is rejected") {
  Vocabulary v;
  CHECK(code_of([&] { tokenize("", v); }) == ErrorCode::EmptyInput);
  CHECK(code_of([&] { tokenize("   \t ", v); }) == ErrorCode::EmptyInput);
}

TEST_CASE("encode refuses unseen tokens") {
  Vocabulary v;
  tokenize("x y", v);
  CHECK(encode("y x", v).tokens == std::vector<TokenId>{1, 0});
  CHECK(code_of([&] { encode("x z", v); }) == ErrorCode::UnknownToken);
}

TEST_CASE("whitespace round trip is exact up to whitespace normalization") {
  Vocabulary v;
  const std::string text = "  the\tcat  sat\n on  ";
  const auto doc = tokenize(text, v);
  CHECK(detokenize(doc.tokens, v) == normalize_whitespace(text));
  CHECK(normalize_whitespace(text) == "the cat sat on");
}

TEST_CASE("byte policy round trips the 10k-line fixture losslessly") {
  std::ifstream in(fixture("roundtrip_10k.txt"), std::ios::binary);
  REQUIRE(in);
  Vocabulary v(TokenizePolicy::Byte);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto doc = tokenize(line, v);
    REQUIRE(detokenize(doc.tokens, v) == line);
    ++lines;
  }
  CHECK(lines == 10000);
  CHECK(v.size() <= 256);
}

TEST_CASE("vocabulary json round trip") {
  Vocabulary v(TokenizePolicy::Byte);
  tokenize("h\xc3\xa9llo\t", v);
  v.set_end_of_document(0);
  const auto back = Vocabulary::from_json(v.to_json());
  CHECK(back.policy() == TokenizePolicy::Byte);
  CHECK(back.size() == v.size());
  for (TokenId i = 0; i < v.size(); ++i) CHECK(back.token(i) == v.token(i));
  CHECK(back.end_of_document() == v.end_of_document());
}

TEST_CASE("load_corpus keeps line-based ids, skips blanks and caps length") {
  const auto path = fs::temp_directory_path() / "trajlab_corpus_test.txt";
  std::ofstream(path) << "a b c d\n\nb c\r\n";
  Vocabulary v;
  const auto docs = load_corpus(path, v, CorpusOptions{3, "t"});
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].id == "t:1");
  CHECK(docs[0].size() == 3);
  CHECK(docs[1].id == "t:3");
  CHECK(detokenize(docs[1].tokens, v) == "b c");
  fs::remove(path);
}

TEST_CASE("corruption count and determinism") {
  Vocabulary v;
  const auto doc = tokenize("a b c d e f g h i j", v, "d");
  const CorruptionSpec spec{0.4, 7};
  const auto r1 = corrupt_with_positions(doc, spec, v);
  const auto r2 = corrupt_with_positions(doc, spec, v);
  CHECK(r1.replaced_positions.size() == 4);
  CHECK(r1.replaced_positions == r2.replaced_positions);
  CHECK(r1.document == r2.document);
  CHECK(std::is_sorted(r1.replaced_positions.begin(), r1.replaced_positions.end()));
  CHECK(std::set<std::size_t>(r1.replaced_positions.begin(), r1.replaced_positions.end()).size() == 4);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const bool selected = std::count(r1.replaced_positions.begin(), r1.replaced_positions.end(), i) > 0;
    if (!selected) CHECK(r1.document.tokens[i] == doc.tokens[i]);
  }
}

TEST_CASE("corruption count is round(rate * len) for every rate and length") {
  Vocabulary v;
  std::string text;
  for (int i = 0; i < 37; ++i) text += "w" + std::to_string(i % 9) + " ";
  const auto full = tokenize(text, v);
  for (std::size_t len = 1; len <= full.size(); ++len) {
    Document doc{"d", std::vector<TokenId>(full.tokens.begin(), full.tokens.begin() + static_cast<long>(len))};
    for (double rate : {0.0, 0.1, 0.25, 0.5, 0.75, 1.0}) {
      const auto r = corrupt_with_positions(doc, {rate, len * 31}, v);
      CHECK(r.replaced_positions.size() == static_cast<std::size_t>(std::llround(rate * static_cast<double>(len))));
    }
  }
}

TEST_CASE("zero rate and single-token vocabulary are identities") {
  Vocabulary v;
  const auto doc = tokenize("p q r s", v);
  CHECK(corrupt(doc, {0.0, 3}, v) == doc);
  Vocabulary one;
  const auto mono = tokenize("z z z z z", one);
  CHECK(corrupt(mono, {1.0, 3}, one) == mono);
}

TEST_CASE("rate-1 replacements collide with the original at rate 1/|V|") {
  Vocabulary v;
  std::string text;
  for (int i = 0; i < 20; ++i) text += "t" + std::to_string(i) + " ";
  const auto doc = tokenize(text, v);
  const double p = 1.0 / static_cast<double>(v.size());
  std::size_t same = 0, total = 0;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    const auto c = corrupt(doc, {1.0, trial}, v);
    for (std::size_t i = 0; i < doc.size(); ++i) same += c.tokens[i] == doc.tokens[i] ? 1 : 0;
    total += doc.size();
  }
  const double frac = static_cast<double>(same) / static_cast<double>(total);
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(total));
  CHECK(std::fabs(frac - p) <= 4 * se);
}

TEST_CASE("corrupted corpus manifest records every replacement") {
  Vocabulary v;
  std::vector<Document> docs{tokenize("a b c d", v, "x:1"), tokenize("c d e", v, "x:2")};
  std::vector<CorruptionResult> results;
  std::vector<CorruptionSpec> specs;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    specs.push_back({0.5, 10 + i});
    results.push_back(corrupt_with_positions(docs[i], specs.back(), v));
  }
  const auto path = fs::temp_directory_path() / "trajlab_corrupt_test.txt";
  write_corrupted_corpus(path, results, specs, v, 0);
  const auto manifest = nlohmann::json::parse(slurp(path.string() + ".manifest.json"));
  REQUIRE(manifest.at("documents").size() == 2);
  CHECK(manifest["documents"][1]["doc_id"] == "x:2");
  CHECK(manifest["documents"][0]["replaced_positions"].get<std::vector<std::size_t>>() ==
        results[0].replaced_positions);
  std::istringstream lines(slurp(path));
  std::string first;
  std::getline(lines, first);
  CHECK(first == detokenize(results[0].document.tokens, v));
  fs::remove(path);
  fs::remove(path.string() + ".manifest.json");
}

TEST_CASE("extract_prompt") {
  Document doc{"d", {3, 1, 4, 1, 5, 9, 2}};
  const auto p = extract_prompt(doc, 5);
  CHECK(p.tokens == std::vector<TokenId>{3, 1, 4, 1, 5});
  CHECK(p.id == "d#prompt");
  CHECK(extract_prompt(doc, 7).tokens == doc.tokens);
  CHECK(code_of([&] { extract_prompt(doc, 8); }) == ErrorCode::InsufficientLength);
}
