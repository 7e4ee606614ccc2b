// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <string>

#include "oracles.hpp"
#include "trajlab/backend.hpp"
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

std::vector<Document> docs_of(Vocabulary& v, std::initializer_list<const char*> lines) {
  std::vector<Document> out;
  int i = 0;
  for (const char* l : lines) out.push_back(tokenize(l, v, "d:" + std::to_string(++i)));
  return out;
}

// Small random corpus over a handful of symbols, so contexts repeat.
std::vector<Document> random_corpus(Vocabulary& v, std::uint64_t seed, std::size_t docs, std::size_t symbols) {
  std::mt19937_64 gen(seed);
  std::vector<std::string> lines;
  for (std::size_t d = 0; d < docs; ++d) {
    std::string line;
    const std::size_t len = 1 + gen() % 12;
    for (std::size_t i = 0; i < len; ++i) line += "s" + std::to_string(gen() % symbols) + " ";
    lines.push_back(line);
  }
  return tokenize_lines(lines, v);
}

}  // namespace

TEST_CASE("flops is 6 * params * tokens") {
  CHECK(training_flops(10, 100) == 6000.0);
  CHECK(training_flops(10, 0) == 0.0);
  CHECK(training_flops(20, 100) == 2 * training_flops(10, 100));
}

TEST_CASE("default weights sum to one and grow with order") {
  for (std::size_t order = 1; order <= 5; ++order) {
    const auto w = InterpolationWeights::defaults(order, 0.01);
    CHECK_NOTHROW(w.validate(order));
    CHECK(w.uniform == 0.01);
    for (std::size_t k = 1; k < order; ++k) CHECK(w.orders[k] > w.orders[k - 1]);
  }
}

TEST_CASE("degenerate weights are rejected") {
  CHECK(code_of([] { InterpolationWeights{0.5, {0.4}}.validate(1); }) == ErrorCode::InvalidSmoothing);
  CHECK(code_of([] { InterpolationWeights{-0.1, {1.1}}.validate(1); }) == ErrorCode::InvalidSmoothing);
  CHECK(code_of([] { InterpolationWeights{0.0, {1.0}}.validate(2); }) == ErrorCode::InvalidSmoothing);
  Vocabulary v;
  const auto docs = docs_of(v, {"a b", "b a"});
  CHECK(code_of([&] { train_ngram("m", docs, v, 1, 2, InterpolationWeights{0.2, {0.2}}); }) ==
        ErrorCode::InvalidSmoothing);
}

TEST_CASE("unigram MLE") {
  Vocabulary v;
  const auto docs = docs_of(v, {"a a", "a b"});
  const auto m = train_ngram("m", docs, v, 1, 2, InterpolationWeights{0.0, {1.0}});
  const auto d = m.next_token_dist(m.final_checkpoint(), {});
  CHECK(d[0] == 0.75);
  CHECK(d[1] == 0.25);
  const Document ab{"x", {0, 1}};
  CHECK(perplexity(m, m.final_checkpoint(), ab).aggregate ==
        doctest::Approx(2.309401076758503).epsilon(1e-14));
  const Document b{"y", {1}};
  const auto single = perplexity(m, m.final_checkpoint(), b);
  CHECK(single.aggregate == doctest::Approx(single.per_token[0]).epsilon(1e-15));
}

TEST_CASE("bigram interpolation hand example") {
  Vocabulary v;
  const auto docs = docs_of(v, {"a b a", "b a b"});
  const auto m = train_ngram("m", docs, v, 2, 2, InterpolationWeights{1.0 / 3, {1.0 / 3, 1.0 / 3}});
  const TokenId a = *v.find("a"), b = *v.find("b");
  const std::vector<TokenId> ctx{a};
  CHECK(m.token_probability(m.final_checkpoint(), ctx, b) == doctest::Approx(2.0 / 3).epsilon(1e-14));
}

TEST_CASE("uniform-only model and unseen contexts") {
  Vocabulary v;
  const auto docs = docs_of(v, {"a b c d", "d c b a"});
  const auto m = train_ngram("m", docs, v, 3, 2, InterpolationWeights::uniform_only(3));
  const std::vector<TokenId> ctx{3, 3};
  for (double p : m.next_token_dist(0, ctx).probs) CHECK(p == 0.25);
  CHECK(perplexity(m, 1, docs[0]).aggregate == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("probabilities match a brute-force count oracle") {
  Vocabulary v;
  const auto docs = random_corpus(v, 11, 40, 5);
  const std::size_t order = 3;
  const auto w = InterpolationWeights::defaults(order, 0.05);
  const auto m = train_ngram("m", docs, v, order, 4, w);
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TokenId> hist(gen() % 4);
    for (auto& t : hist) t = static_cast<TokenId>(gen() % v.size());
    const auto tok = static_cast<TokenId>(gen() % v.size());
    const double expected = oracle::ngram_probability(docs, v.size(), w.uniform, w.orders, hist, tok);
    CHECK(m.token_probability(m.final_checkpoint(), hist, tok) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("distributions are valid and agree with single-token lookup bit for bit") {
  Vocabulary v;
  const auto docs = random_corpus(v, 5, 30, 6);
  const auto m = train_ngram("m", docs, v, 3, 3, InterpolationWeights::defaults(3));
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t ckpt = gen() % m.num_checkpoints();
    std::vector<TokenId> ctx(gen() % 5);
    for (auto& t : ctx) t = static_cast<TokenId>(gen() % v.size());
    const auto d = m.next_token_dist(ckpt, ctx);
    CHECK(d.is_valid(1e-9));
    for (TokenId t = 0; t < v.size(); ++t) CHECK(d[t] == m.token_probability(ckpt, ctx, t));
  }
}

TEST_CASE("checkpoints are prefix consistent with retraining") {
  Vocabulary v;
  const auto docs = random_corpus(v, 21, 12, 4);
  const auto full = train_ngram("m", docs, v, 2, 4, InterpolationWeights::defaults(2));
  for (std::size_t k = 0; k < 4; ++k) {
    NgramCounts scratch(2);
    for (std::size_t d = 0; d < full.checkpoint(k).step; ++d) scratch.add_document(docs[d].tokens);
    CHECK(full.counts(k) == scratch);
    if (k > 0) {
      CHECK(full.checkpoint(k).tokens_seen > full.checkpoint(k - 1).tokens_seen);
      CHECK(full.checkpoint(k).step > full.checkpoint(k - 1).step);
    }
  }
  CHECK(full.checkpoint(3).step == docs.size());
  CHECK(full.checkpoint(0).params == full.counts(3).distinct_ngrams());
}

TEST_CASE("counts match brute-force occurrences") {
  Vocabulary v;
  const auto docs = random_corpus(v, 8, 25, 4);
  NgramCounts c(3);
  for (const auto& d : docs) c.add_document(d.tokens);
  for (std::size_t k = 1; k <= 3; ++k) {
    for (const auto& [ctx, cc] : c.tables[k - 1]) {
      CHECK(cc.total == oracle::occurrences(docs, ctx, -1));
      for (const auto& [tok, n] : cc.next) CHECK(n == oracle::occurrences(docs, ctx, tok));
    }
  }
}

TEST_CASE("missing checkpoint") {
  Vocabulary v;
  const auto docs = docs_of(v, {"a b", "b a"});
  const auto m = train_ngram("m", docs, v, 1, 2, InterpolationWeights::defaults(1));
  CHECK(code_of([&] { m.next_token_dist(2, {}); }) == ErrorCode::NoSuchCheckpoint);
  CHECK(code_of([&] { perplexity(m, 5, docs[0]); }) == ErrorCode::NoSuchCheckpoint);
}

TEST_CASE("zero probability is reported with its position") {
  Vocabulary v;
  const auto docs = docs_of(v, {"a a", "a a"});
  v.intern("b");
  const auto m = train_ngram("m", docs, v, 1, 2, InterpolationWeights{0.0, {1.0}});
  const Document d{"z", {0, 1}};
  try {
    perplexity(m, 1, d);
    FAIL("expected ZeroProbability");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroProbability);
    CHECK(std::string(e.what()).find("position 1") != std::string::npos);
  }
}

TEST_CASE("corpus perplexity pools tokens rather than averaging documents") {
  Vocabulary v;
  const auto docs = docs_of(v, {"a a a b", "b"});
  const auto m = train_ngram("m", docs, v, 1, 2, InterpolationWeights::defaults(1));
  const auto r0 = perplexity(m, 1, docs[0]);
  const auto r1 = perplexity(m, 1, docs[1]);
  const double pooled = std::exp(-(r0.total_log_prob + r1.total_log_prob) / 5.0);
  CHECK(corpus_perplexity(m, 1, docs) == doctest::Approx(pooled).epsilon(1e-15));
  CHECK(corpus_perplexity(m, 1, docs) != doctest::Approx((r0.aggregate + r1.aggregate) / 2));
}

TEST_CASE("snapshot save and load reproduce the model") {
  Vocabulary v;
  const auto docs = random_corpus(v, 4, 20, 5);
  const auto m = train_ngram("snap", docs, v, 3, 4, InterpolationWeights::defaults(3));
  const auto path = fs::temp_directory_path() / "trajlab_snapshot_test.json";
  m.save(path);
  const auto back = NgramSeries::load(path);
  CHECK(back.model_id() == "snap");
  CHECK(back.order() == 3);
  for (std::size_t c = 0; c < m.num_checkpoints(); ++c) {
    CHECK(back.counts(c) == m.counts(c));
    CHECK(back.checkpoint(c).tokens_seen == m.checkpoint(c).tokens_seen);
    CHECK(back.token_log_probs(c, docs[3]) == m.token_log_probs(c, docs[3]));
  }
  fs::remove(path);
}

TEST_CASE("dump round trip and strict ingestion") {
  Vocabulary v;
  const auto docs = random_corpus(v, 6, 12, 5);
  const auto m = train_ngram("dumped", docs, v, 2, 3, InterpolationWeights::defaults(2));
  const auto table = score_corpus(m, docs, 2);
  const auto dir = fs::temp_directory_path() / "trajlab_dump_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<fs::path> files;
  for (std::size_t c = 0; c < m.num_checkpoints(); ++c) {
    files.push_back(dir / ("c" + std::to_string(c) + ".jsonl"));
    write_dump(table, c, files.back());
  }
  std::vector<fs::path> shuffled{files[2], files[0], files[1]};
  const auto series = ingest_dump(shuffled);
  CHECK(series.model_id() == "dumped");
  CHECK(series.num_checkpoints() == 3);
  CHECK_FALSE(series.supports_distributions());
  CHECK(code_of([&] { series.next_token_dist(0, {}); }) == ErrorCode::CapabilityUnsupported);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(series.checkpoint(c).step == m.checkpoint(c).step);
    CHECK(perplexity(series, c, docs[1]).aggregate == perplexity(m, c, docs[1]).aggregate);
  }
  CHECK_NOTHROW(check_aligned(table, series.table()));

  // Drop the last record of checkpoint 1.
  std::ifstream in(files[1]);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  in.close();
  lines.pop_back();
  std::ofstream out(files[1]);
  for (const auto& l : lines) out << l << '\n';
  out.close();
  CHECK(code_of([&] { ingest_dump(files); }) == ErrorCode::AlignmentError);
  fs::remove_all(dir);
}

TEST_CASE("dump log-prob of ln 0.5 gives per-token perplexity 2") {
  const auto dir = fs::temp_directory_path() / "trajlab_dump_half";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<fs::path> files;
  for (int c = 0; c < 2; ++c) {
    files.push_back(dir / ("c" + std::to_string(c) + ".jsonl"));
    std::ofstream(files.back()) << std::setprecision(17) << R"({"doc":"q","pos":0,"tok":1,"lp":)" << std::log(0.5) << "}\n";
    std::ofstream(dump_meta_path(files.back()))
        << R"({"model_id":"ext","step":)" << (c + 1) << R"(,"tokens_seen":)" << (c + 1) * 10
        << R"(,"params":5})";
  }
  const auto s = ingest_dump(files);
  const Document d{"q", {1}};
  CHECK(perplexity(s, 0, d).per_token[0] == doctest::Approx(2.0).epsilon(1e-15));
  fs::remove_all(dir);
}
