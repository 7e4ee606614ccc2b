// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "trajlab/backend.hpp"
#include "trajlab/decoder.hpp"
#include "trajlab/error.hpp"

using namespace trajlab;

namespace {

NextTokenDistribution dist(std::vector<double> p) { return NextTokenDistribution{std::move(p)}; }

NextTokenDistribution random_dist(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(n);
  double s = 0;
  for (auto& v : p) s += (v = u(gen) < 0.2 ? 0.0 : u(gen));
  if (s == 0) {
    p[0] = 1;
    s = 1;
  }
  for (auto& v : p) v /= s;
  return dist(p);
}

struct Pair {
  Vocabulary vocab;
  std::vector<Document> docs;
  NgramSeries small;
  NgramSeries large;
};

Pair make_pair() {
  Vocabulary v;
  std::vector<std::string> lines{"the cat sat on the mat .", "the dog sat on the log .", "a cat saw the dog .",
                                 "the mat was red .",        "a dog ran to the cat .",  "the log was old ."};
  auto docs = tokenize_lines(lines, v);
  auto small = train_ngram("s", docs, v, 1, 2, InterpolationWeights::defaults(1));
  auto large = train_ngram("l", docs, v, 3, 2, InterpolationWeights::defaults(3));
  return Pair{v, docs, std::move(small), std::move(large)};
}

}  // namespace

TEST_CASE("interpolation hand example and identities") {
  const auto ps = dist({0.5, 0.3, 0.2});
  const auto pl = dist({0.2, 0.3, 0.5});
  const auto contrast = interpolate(ps, pl, 1, -1);
  CHECK(contrast[0] == doctest::Approx(1.0));
  CHECK(contrast[1] == 0.0);
  CHECK(contrast[2] == 0.0);
  const auto s = interpolate(ps, pl, 1, 0);
  const auto l = interpolate(ps, pl, 0, 1);
  for (TokenId i = 0; i < 3; ++i) {
    CHECK(std::fabs(s[i] - ps[i]) <= 1e-12);
    CHECK(std::fabs(l[i] - pl[i]) <= 1e-12);
  }
}

TEST_CASE("degenerate interpolation") {
  const auto p = dist({0.5, 0.5});
  try {
    interpolate(p, p, 1, -1);
    FAIL("expected DegenerateDistribution");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateDistribution);
  }
}

TEST_CASE("interpolation properties over random draws") {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> lam(-1, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + gen() % 30;
    const auto ps = random_dist(gen, n), pl = random_dist(gen, n);
    const double a = lam(gen), b = lam(gen);
    try {
      const auto r = interpolate(ps, pl, a, b);
      CHECK(r.is_valid(1e-9));
      const auto swapped = interpolate(pl, ps, b, a);
      for (TokenId i = 0; i < n; ++i) CHECK(std::fabs(r[i] - swapped[i]) <= 1e-15);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateDistribution);
    }
    try {
      const auto c = interpolate(ps, pl, 1, -1);
      for (TokenId i = 0; i < n; ++i) {
        if (c[i] > 0) CHECK(ps[i] > pl[i]);
      }
    } catch (const Error&) {
    }
  }
}

TEST_CASE("greedy ties go to the smallest id") {
  CHECK(greedy_pick(dist({0.2, 0.4, 0.4})) == 1);
  CHECK(greedy_pick(dist({0.25, 0.25, 0.25, 0.25})) == 0);
}

TEST_CASE("nucleus includes the crossing token and nothing more") {
  const auto p = dist({0.1, 0.5, 0.3, 0.1});
  // Sorted: 1 (0.5), 2 (0.3) reaches 0.8 >= 0.7; tokens 0 and 3 are excluded.
  std::set<TokenId> seen;
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) seen.insert(nucleus_pick(p, 0.7, rng));
  CHECK(seen == std::set<TokenId>{1, 2});
  Rng r2(1);
  std::set<TokenId> only;
  for (int i = 0; i < 200; ++i) only.insert(nucleus_pick(p, 0.5, r2));
  CHECK(only == std::set<TokenId>{1});
}

TEST_CASE("nucleus with top_p = 1 is ancestral sampling") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_dist(gen, 10);
    Rng a(trial), b(trial);
    for (int i = 0; i < 20; ++i) CHECK(nucleus_pick(p, 1.0, a) == ancestral_pick(p, b));
  }
}

TEST_CASE("ancestral sampling frequencies") {
  const auto p = dist({0.1, 0.6, 0.3});
  Rng rng(77);
  std::size_t counts[3] = {};
  const int n = 30000;
  for (int i = 0; i < n; ++i) ++counts[ancestral_pick(p, rng)];
  for (int t = 0; t < 3; ++t) {
    const double se = std::sqrt(p[t] * (1 - p[t]) / n);
    CHECK(std::fabs(static_cast<double>(counts[t]) / n - p[t]) < 4 * se);
  }
}

TEST_CASE("decode is deterministic and records every step") {
  const auto pr = make_pair();
  const auto prompt = extract_prompt(pr.docs[0], 2);
  DecodeConfig cfg{0.5, 0.5, Strategy::Nucleus, 0.9, 12, 42};
  const auto a = decode({&pr.small, 1}, {&pr.large, 1}, prompt, cfg);
  const auto b = decode({&pr.small, 1}, {&pr.large, 1}, prompt, cfg);
  CHECK(a.generated == b.generated);
  CHECK(a.generated.size() == 12);
  CHECK(a.steps.size() == 12);
  CHECK(a.termination == "max_new_tokens");
  for (const auto& s : a.steps) CHECK(s.pprime > 0.0);
  CHECK(a.full_text().tokens.size() == 14);
}

TEST_CASE("lambda (0,1) greedy equals plain large-model greedy") {
  const auto pr = make_pair();
  const auto prompt = extract_prompt(pr.docs[1], 3);
  const auto rec = decode({&pr.small, 1}, {&pr.large, 1}, prompt, {0, 1, Strategy::Greedy, 0.9, 15, 0});
  std::vector<TokenId> ctx = prompt.tokens;
  for (TokenId t : rec.generated) {
    CHECK(t == greedy_pick(pr.large.next_token_dist(1, ctx)));
    ctx.push_back(t);
  }
}

TEST_CASE("degenerate step ends generation with a partial record") {
  const auto pr = make_pair();
  const auto prompt = extract_prompt(pr.docs[0], 2);
  // Same model on both sides: p_s - p_l is identically zero.
  const auto rec = decode({&pr.large, 1}, {&pr.large, 1}, prompt, {1, -1, Strategy::Greedy, 0.9, 10, 0});
  CHECK(rec.terminated_early);
  CHECK(rec.termination == "degenerate_distribution");
  CHECK(rec.generated.empty());
}

TEST_CASE("end-of-document token stops generation") {
  const auto pr = make_pair();
  const TokenId dot = *pr.vocab.find(".");
  const auto prompt = extract_prompt(pr.docs[0], 5);
  const auto rec = decode({&pr.small, 1}, {&pr.large, 1}, prompt, {0, 1, Strategy::Greedy, 0.9, 30, 0}, dot);
  REQUIRE_FALSE(rec.generated.empty());
  CHECK(rec.generated.back() == dot);
  CHECK(rec.termination == "end_of_document");
}

TEST_CASE("decode config validation") {
  CHECK_THROWS_AS((DecodeConfig{1.5, 0}.validate()), Error);
  CHECK_THROWS_AS((DecodeConfig{0, 1, Strategy::Nucleus, 0.0}.validate()), Error);
  CHECK_NOTHROW((DecodeConfig{-1, 1}.validate()));
}

TEST_CASE("generation json carries the documented fields") {
  const auto pr = make_pair();
  const auto rec = decode({&pr.small, 1}, {&pr.large, 1}, extract_prompt(pr.docs[0], 2),
                          {1, -1, Strategy::Greedy, 0.9, 3, 0});
  const auto j = to_json(rec, pr.vocab);
  for (const char* key : {"prompt", "text", "lambda_s", "lambda_l", "strategy", "seed", "per_step"}) {
    CHECK(j.contains(key));
  }
  REQUIRE(j["per_step"].size() == rec.steps.size());
  for (const char* key : {"tok", "ps", "pl", "pprime"}) CHECK(j["per_step"][0].contains(key));
}

TEST_CASE("spearman with ties") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{10, 20, 30, 40};
  const std::vector<double> z{4, 3, 2, 1};
  const std::vector<double> tied{1, 1, 2, 2};
  CHECK(spearman(x, y) == doctest::Approx(1.0));
  CHECK(spearman(x, z) == doctest::Approx(-1.0));
  CHECK(spearman(x, tied) == doctest::Approx(0.8944271909999159));
}

TEST_CASE("single-series sweep equals the perplexity op") {
  const auto pr = make_pair();
  const LanguageModelSeries* one[] = {&pr.large};
  const auto sweep = scaling_sweep(pr.docs[2], one, 1);
  REQUIRE(sweep.rows.size() == 1);
  for (std::size_t c = 0; c < pr.large.num_checkpoints(); ++c) {
    CHECK(sweep.rows[0].trajectory[c] == perplexity(pr.large, c, pr.docs[2], 1).aggregate);
  }
}
