// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "trajlab/error.hpp"
#include "trajlab/parallel.hpp"

namespace trajlab {
namespace {

void require_checkpoint(const LanguageModelSeries& series, std::size_t checkpoint) {
  if (checkpoint >= series.num_checkpoints()) {
    throw Error(ErrorCode::NoSuchCheckpoint, series.model_id() + " has no checkpoint " + std::to_string(checkpoint) +
                                                 " (" + std::to_string(series.num_checkpoints()) + " available)");
  }
}

void check_monotone(const std::vector<CheckpointMeta>& metas, const std::string& model_id) {
  for (std::size_t i = 1; i < metas.size(); ++i) {
    if (metas[i].step <= metas[i - 1].step || metas[i].tokens_seen <= metas[i - 1].tokens_seen) {
      throw Error(ErrorCode::InvalidArgument,
                  model_id + ": step and tokens_seen must strictly increase across checkpoints");
    }
  }
}

std::string key_string(const std::string& doc, std::size_t pos) {
  return "(" + doc + ", " + std::to_string(pos) + ")";
}

nlohmann::json meta_json(const CheckpointMeta& m) {
  return {{"index", m.index}, {"step", m.step}, {"tokens_seen", m.tokens_seen}, {"params", m.params},
          {"flops", m.flops}};
}

}  // namespace

double training_flops(std::uint64_t params, std::uint64_t tokens_seen) noexcept {
  return 6.0 * static_cast<double>(params) * static_cast<double>(tokens_seen);
}

double flops(const CheckpointMeta& meta) noexcept { return training_flops(meta.params, meta.tokens_seen); }

bool NextTokenDistribution::is_valid(double tolerance) const noexcept {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

double LanguageModelSeries::token_log_prob(std::size_t checkpoint, std::span<const TokenId> context,
                                           TokenId token) const {
  auto dist = next_token_dist(checkpoint, context);
  if (token >= dist.size()) throw Error(ErrorCode::UnknownToken, "token id outside vocabulary");
  return std::log(dist[token]);
}

const CheckpointMeta& LanguageModelSeries::checkpoint(std::size_t index) const {
  require_checkpoint(*this, index);
  return checkpoints()[index];
}

// ---------------------------------------------------------------------------
// Interpolation weights

InterpolationWeights InterpolationWeights::defaults(std::size_t order, double uniform_floor) {
  InterpolationWeights w;
  w.uniform = uniform_floor;
  const double denom = static_cast<double>(order * (order + 1)) / 2.0;
  for (std::size_t k = 1; k <= order; ++k) {
    w.orders.push_back((1.0 - uniform_floor) * static_cast<double>(k) / denom);
  }
  return w;
}

InterpolationWeights InterpolationWeights::uniform_only(std::size_t order) {
  return InterpolationWeights{1.0, std::vector<double>(order, 0.0)};
}

void InterpolationWeights::validate(std::size_t order) const {
  if (orders.size() != order) {
    throw Error(ErrorCode::InvalidSmoothing, "expected " + std::to_string(order) + " order weights, got " +
                                                 std::to_string(orders.size()));
  }
  double sum = uniform;
  bool negative = !(uniform >= 0.0);
  for (double w : orders) {
    negative = negative || !(w >= 0.0);
    sum += w;
  }
  if (negative) throw Error(ErrorCode::InvalidSmoothing, "interpolation weights must be non-negative");
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "interpolation weights sum to " << sum << ", not 1";
    throw Error(ErrorCode::InvalidSmoothing, msg.str());
  }
}

// ---------------------------------------------------------------------------
// Counts

void NgramCounts::add_document(std::span<const TokenId> tokens) {
  std::vector<TokenId> context;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t k = 1; k <= tables.size() && k <= i + 1; ++k) {
      context.assign(tokens.begin() + static_cast<std::ptrdiff_t>(i + 1 - k),
                     tokens.begin() + static_cast<std::ptrdiff_t>(i));
      auto& cc = tables[k - 1][context];
      ++cc.total;
      ++cc.next[tokens[i]];
    }
  }
}

void NgramCounts::merge(const NgramCounts& other) {
  if (tables.size() < other.tables.size()) tables.resize(other.tables.size());
  for (std::size_t k = 0; k < other.tables.size(); ++k) {
    for (const auto& [ctx, cc] : other.tables[k]) {
      auto& dst = tables[k][ctx];
      dst.total += cc.total;
      for (const auto& [tok, c] : cc.next) dst.next[tok] += c;
    }
  }
}

std::uint64_t NgramCounts::distinct_ngrams() const noexcept {
  std::uint64_t n = 0;
  for (const auto& table : tables) {
    for (const auto& entry : table) n += entry.second.next.size();
  }
  return n;
}

bool NgramCounts::operator==(const NgramCounts& other) const {
  if (tables.size() != other.tables.size()) return false;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    if (tables[k].size() != other.tables[k].size()) return false;
    auto a = tables[k].begin();
    auto b = other.tables[k].begin();
    for (; a != tables[k].end(); ++a, ++b) {
      if (a->first != b->first || a->second.total != b->second.total || a->second.next != b->second.next) {
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// NgramSeries

NgramSeries::NgramSeries(std::string model_id, Vocabulary vocab, std::size_t order, InterpolationWeights weights,
                         std::vector<CheckpointMeta> checkpoints, std::vector<NgramCounts> snapshots)
    : model_id_(std::move(model_id)),
      vocab_(std::move(vocab)),
      order_(order),
      weights_(std::move(weights)),
      checkpoints_(std::move(checkpoints)),
      snapshots_(std::move(snapshots)) {
  if (order_ < 1) throw Error(ErrorCode::InvalidArgument, "n-gram order must be >= 1");
  weights_.validate(order_);
  if (vocab_.size() < 1) throw Error(ErrorCode::InvalidArgument, "empty vocabulary");
  if (checkpoints_.size() != snapshots_.size() || checkpoints_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "one count snapshot per checkpoint required");
  }
  check_monotone(checkpoints_, model_id_);
  for (const auto& s : snapshots_) {
    if (s.tables.size() != order_) throw Error(ErrorCode::InvalidArgument, "snapshot order mismatch");
    auto root = s.tables[0].find({});
    if (root == s.tables[0].end() || root->second.total == 0) {
      throw Error(ErrorCode::InvalidArgument, "snapshot has no unigram counts");
    }
    for (const auto& [tok, c] : root->second.next) {
      if (tok >= vocab_.size()) throw Error(ErrorCode::UnknownToken, "count for token outside vocabulary");
    }
  }
}

const NgramCounts& NgramSeries::snapshot(std::size_t checkpoint) const {
  require_checkpoint(*this, checkpoint);
  return snapshots_[checkpoint];
}

const NgramCounts& NgramSeries::counts(std::size_t checkpoint) const { return snapshot(checkpoint); }

std::vector<const ContextCounts*> NgramSeries::resolve(const NgramCounts& counts,
                                                       std::span<const TokenId> context) const {
  std::vector<const ContextCounts*> chosen(order_, nullptr);
  std::vector<TokenId> key;
  const ContextCounts* deepest = nullptr;
  for (std::size_t k = 1; k <= order_; ++k) {
    if (context.size() >= k - 1) {
      key.assign(context.end() - static_cast<std::ptrdiff_t>(k - 1), context.end());
      auto it = counts.tables[k - 1].find(key);
      if (it != counts.tables[k - 1].end() && it->second.total > 0) deepest = &it->second;
    }
    chosen[k - 1] = deepest;
  }
  return chosen;
}

NextTokenDistribution NgramSeries::next_token_dist(std::size_t checkpoint, std::span<const TokenId> context) const {
  const auto& counts = snapshot(checkpoint);
  const auto chosen = resolve(counts, context);
  const double v = static_cast<double>(vocab_.size());
  NextTokenDistribution dist{std::vector<double>(vocab_.size(), weights_.uniform / v)};
  for (std::size_t k = 1; k <= order_; ++k) {
    const double w = weights_.orders[k - 1];
    if (w == 0.0) continue;
    const ContextCounts& cc = *chosen[k - 1];
    const double total = static_cast<double>(cc.total);
    for (const auto& [tok, c] : cc.next) dist.probs[tok] += w * (static_cast<double>(c) / total);
  }
  return dist;
}

double NgramSeries::token_probability(std::size_t checkpoint, std::span<const TokenId> context,
                                      TokenId token) const {
  if (token >= vocab_.size()) throw Error(ErrorCode::UnknownToken, "token id outside vocabulary");
  const auto& counts = snapshot(checkpoint);
  const auto chosen = resolve(counts, context);
  double p = weights_.uniform / static_cast<double>(vocab_.size());
  for (std::size_t k = 1; k <= order_; ++k) {
    const double w = weights_.orders[k - 1];
    if (w == 0.0) continue;
    const ContextCounts& cc = *chosen[k - 1];
    if (auto it = cc.next.find(token); it != cc.next.end()) {
      p += w * (static_cast<double>(it->second) / static_cast<double>(cc.total));
    }
  }
  return p;
}

double NgramSeries::token_log_prob(std::size_t checkpoint, std::span<const TokenId> context, TokenId token) const {
  return std::log(token_probability(checkpoint, context, token));
}

std::vector<double> NgramSeries::token_log_probs(std::size_t checkpoint, const Document& doc) const {
  std::vector<double> out(doc.tokens.size());
  std::span<const TokenId> tokens(doc.tokens);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t ctx_len = std::min(i, order_ - 1);
    out[i] = std::log(token_probability(checkpoint, tokens.subspan(i - ctx_len, ctx_len), tokens[i]));
  }
  return out;
}

nlohmann::json NgramSeries::to_json() const {
  nlohmann::json j;
  j["format"] = "trajlab-ngram";
  j["version"] = "1.0";
  j["model_id"] = model_id_;
  j["order"] = order_;
  j["weights"] = {{"uniform", weights_.uniform}, {"orders", weights_.orders}};
  j["vocabulary"] = vocab_.to_json();
  auto& ckpts = j["checkpoints"] = nlohmann::json::array();
  const NgramCounts empty(order_);
  for (std::size_t c = 0; c < checkpoints_.size(); ++c) {
    const NgramCounts& prev = c == 0 ? empty : snapshots_[c - 1];
    auto entry = meta_json(checkpoints_[c]);
    auto& delta = entry["delta"] = nlohmann::json::array();
    for (std::size_t k = 0; k < order_; ++k) {
      for (const auto& [ctx, cc] : snapshots_[c].tables[k]) {
        auto prev_ctx = prev.tables[k].find(ctx);
        for (const auto& [tok, count] : cc.next) {
          std::uint64_t before = 0;
          if (prev_ctx != prev.tables[k].end()) {
            if (auto it = prev_ctx->second.next.find(tok); it != prev_ctx->second.next.end()) before = it->second;
          }
          if (count > before) delta.push_back({k + 1, ctx, tok, count - before});
        }
      }
    }
    ckpts.push_back(std::move(entry));
  }
  return j;
}

NgramSeries NgramSeries::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "trajlab-ngram") throw Error(ErrorCode::ParseError, "not a trajlab-ngram snapshot");
    const auto version = j.at("version").get<std::string>();
    if (version.rfind("1.", 0) != 0) throw Error(ErrorCode::ParseError, "unsupported snapshot version " + version);
    const auto order = j.at("order").get<std::size_t>();
    InterpolationWeights weights{j.at("weights").at("uniform").get<double>(),
                                 j.at("weights").at("orders").get<std::vector<double>>()};
    std::vector<CheckpointMeta> metas;
    std::vector<NgramCounts> snaps;
    NgramCounts running(order);
    for (const auto& e : j.at("checkpoints")) {
      CheckpointMeta m;
      m.index = e.at("index").get<std::size_t>();
      m.step = e.at("step").get<std::uint64_t>();
      m.tokens_seen = e.at("tokens_seen").get<std::uint64_t>();
      m.params = e.at("params").get<std::uint64_t>();
      m.flops = e.at("flops").get<double>();
      for (const auto& d : e.at("delta")) {
        const auto k = d.at(0).get<std::size_t>();
        if (k < 1 || k > order) throw Error(ErrorCode::ParseError, "delta order out of range");
        auto ctx = d.at(1).get<std::vector<TokenId>>();
        if (ctx.size() != k - 1) throw Error(ErrorCode::ParseError, "delta context length mismatch");
        const auto tok = d.at(2).get<TokenId>();
        const auto count = d.at(3).get<std::uint64_t>();
        auto& cc = running.tables[k - 1][ctx];
        cc.total += count;
        cc.next[tok] += count;
      }
      metas.push_back(m);
      snaps.push_back(running);
    }
    return NgramSeries(j.at("model_id").get<std::string>(), Vocabulary::from_json(j.at("vocabulary")), order,
                       std::move(weights), std::move(metas), std::move(snaps));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed n-gram snapshot: ") + e.what());
  }
}

void NgramSeries::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << to_json().dump() << '\n';
}

NgramSeries NgramSeries::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return from_json(j);
}

NgramSeries train_ngram(std::string model_id, std::span<const Document> corpus, const Vocabulary& vocab,
                        std::size_t order, std::size_t shards, const InterpolationWeights& weights) {
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "n-gram order must be >= 1");
  weights.validate(order);
  if (corpus.empty()) throw Error(ErrorCode::EmptyInput, "training corpus is empty");
  if (shards < 2) throw Error(ErrorCode::InvalidArgument, "at least 2 shards are required");
  if (corpus.size() < shards) {
    throw Error(ErrorCode::InvalidArgument, "corpus has " + std::to_string(corpus.size()) +
                                                " documents, fewer than " + std::to_string(shards) + " shards");
  }
  for (const auto& doc : corpus) {
    if (doc.tokens.empty()) throw Error(ErrorCode::EmptyInput, "document " + doc.id + " is empty");
    for (TokenId t : doc.tokens) {
      if (t >= vocab.size()) throw Error(ErrorCode::UnknownToken, "document " + doc.id + " has token outside vocabulary");
    }
  }

  std::vector<CheckpointMeta> metas;
  std::vector<NgramCounts> snaps;
  NgramCounts running(order);
  std::uint64_t tokens_seen = 0;
  std::size_t next_doc = 0;
  const std::size_t base = corpus.size() / shards;
  const std::size_t extra = corpus.size() % shards;
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t end = next_doc + base + (s < extra ? 1 : 0);
    for (; next_doc < end; ++next_doc) {
      running.add_document(corpus[next_doc].tokens);
      tokens_seen += corpus[next_doc].tokens.size();
    }
    metas.push_back(CheckpointMeta{s, static_cast<std::uint64_t>(next_doc), tokens_seen, 0.0, 0});
    snaps.push_back(running);
  }
  const std::uint64_t params = running.distinct_ngrams();
  for (auto& m : metas) {
    m.params = params;
    m.flops = flops(m);
  }
  return NgramSeries(std::move(model_id), vocab, order, weights, std::move(metas), std::move(snaps));
}

// ---------------------------------------------------------------------------
// Perplexity

double pooled_perplexity(std::span<const double> log_probs) {
  if (log_probs.empty()) throw Error(ErrorCode::EmptyInput, "no log-probabilities to pool");
  double sum = 0.0;
  for (double lp : log_probs) sum += lp;
  return std::exp(-sum / static_cast<double>(log_probs.size()));
}

PerplexityResult perplexity(const LanguageModelSeries& series, std::size_t checkpoint, const Document& doc,
                            std::size_t first_scored) {
  if (doc.tokens.empty()) throw Error(ErrorCode::EmptyInput, "cannot score an empty document");
  if (first_scored >= doc.tokens.size()) {
    throw Error(ErrorCode::InsufficientLength, "no positions to score in " + doc.id);
  }
  require_checkpoint(series, checkpoint);
  const auto lps = series.token_log_probs(checkpoint, doc);
  PerplexityResult r;
  for (std::size_t i = first_scored; i < lps.size(); ++i) {
    if (!(lps[i] > -std::numeric_limits<double>::infinity())) {
      throw Error(ErrorCode::ZeroProbability, doc.id + " position " + std::to_string(i) + " has probability 0");
    }
    r.per_token.push_back(std::exp(-lps[i]));
    r.total_log_prob += lps[i];
  }
  r.count = r.per_token.size();
  r.aggregate = std::exp(-r.total_log_prob / static_cast<double>(r.count));
  return r;
}

double corpus_perplexity(const LanguageModelSeries& series, std::size_t checkpoint, std::span<const Document> docs) {
  if (docs.empty()) throw Error(ErrorCode::EmptyInput, "no documents to score");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& doc : docs) {
    const auto r = perplexity(series, checkpoint, doc);
    total += r.total_log_prob;
    count += r.count;
  }
  return std::exp(-total / static_cast<double>(count));
}

LogProbTable score_corpus(const LanguageModelSeries& series, std::span<const Document> docs, std::size_t jobs) {
  LogProbTable table{series.model_id(), std::string(series.backend_kind()), series.checkpoints(), {}, {}};
  std::vector<std::size_t> offsets;
  for (const auto& doc : docs) {
    offsets.push_back(table.keys.size());
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) table.keys.push_back({doc.id, i, doc.tokens[i]});
  }
  table.log_probs.assign(series.num_checkpoints(), std::vector<double>(table.keys.size()));
  parallel_for(docs.size(), jobs, [&](std::size_t d) {
    for (std::size_t c = 0; c < series.num_checkpoints(); ++c) {
      const auto lps = series.token_log_probs(c, docs[d]);
      std::copy(lps.begin(), lps.end(), table.log_probs[c].begin() + static_cast<std::ptrdiff_t>(offsets[d]));
    }
  });
  return table;
}

void check_aligned(const LogProbTable& a, const LogProbTable& b) {
  std::map<std::pair<std::string, std::size_t>, TokenId> index;
  for (const auto& k : a.keys) index.emplace(std::pair{k.doc, k.pos}, k.tok);
  std::size_t matched = 0;
  for (const auto& k : b.keys) {
    auto it = index.find({k.doc, k.pos});
    if (it == index.end()) {
      throw Error(ErrorCode::AlignmentError, key_string(k.doc, k.pos) + " present in " + b.model_id +
                                                 " but not in " + a.model_id);
    }
    if (it->second != k.tok) {
      throw Error(ErrorCode::AlignmentError, key_string(k.doc, k.pos) + " has token " + std::to_string(it->second) +
                                                 " in " + a.model_id + " but " + std::to_string(k.tok) + " in " +
                                                 b.model_id);
    }
    ++matched;
  }
  if (matched != a.keys.size()) {
    std::map<std::pair<std::string, std::size_t>, bool> seen;
    for (const auto& k : b.keys) seen[{k.doc, k.pos}] = true;
    for (const auto& k : a.keys) {
      if (!seen.count({k.doc, k.pos})) {
        throw Error(ErrorCode::AlignmentError, key_string(k.doc, k.pos) + " present in " + a.model_id +
                                                   " but not in " + b.model_id);
      }
    }
    throw Error(ErrorCode::AlignmentError, "duplicate (doc, pos) records");
  }
}

// ---------------------------------------------------------------------------
// Dumps

std::filesystem::path dump_meta_path(const std::filesystem::path& dump) {
  auto meta = dump;
  meta.replace_extension(".meta.json");
  return meta;
}

void write_dump(const LogProbTable& table, std::size_t checkpoint, const std::filesystem::path& path) {
  if (checkpoint >= table.num_checkpoints()) {
    throw Error(ErrorCode::NoSuchCheckpoint, "table has no checkpoint " + std::to_string(checkpoint));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const auto& lps = table.log_probs[checkpoint];
  for (std::size_t i = 0; i < table.keys.size(); ++i) {
    nlohmann::json rec = {{"doc", table.keys[i].doc}, {"pos", table.keys[i].pos}, {"tok", table.keys[i].tok},
                          {"lp", lps[i]}};
    out << rec.dump() << '\n';
  }
  const auto& m = table.checkpoints[checkpoint];
  std::ofstream meta(dump_meta_path(path), std::ios::binary);
  if (!meta) throw Error(ErrorCode::IoError, "cannot write meta for " + path.string());
  meta << nlohmann::json{{"model_id", table.model_id},
                         {"step", m.step},
                         {"tokens_seen", m.tokens_seen},
                         {"params", m.params}}
              .dump()
       << '\n';
}

DumpSeries::DumpSeries(LogProbTable table, std::size_t vocab_size)
    : table_(std::move(table)), vocab_size_(vocab_size) {
  if (table_.checkpoints.empty()) throw Error(ErrorCode::InvalidArgument, "dump series has no checkpoints");
  check_monotone(table_.checkpoints, table_.model_id);
  for (std::size_t i = 0; i < table_.keys.size(); ++i) {
    const auto& k = table_.keys[i];
    if (!index_[k.doc].emplace(k.pos, i).second) {
      throw Error(ErrorCode::AlignmentError, "duplicate record " + key_string(k.doc, k.pos));
    }
  }
}

NextTokenDistribution DumpSeries::next_token_dist(std::size_t checkpoint, std::span<const TokenId>) const {
  require_checkpoint(*this, checkpoint);
  throw Error(ErrorCode::CapabilityUnsupported,
              table_.model_id + " is backed by log-prob dumps and cannot produce next-token distributions");
}

std::vector<double> DumpSeries::token_log_probs(std::size_t checkpoint, const Document& doc) const {
  require_checkpoint(*this, checkpoint);
  auto doc_it = index_.find(doc.id);
  if (doc_it == index_.end()) throw Error(ErrorCode::AlignmentError, "document " + doc.id + " not in dump");
  std::vector<double> out(doc.tokens.size());
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    auto it = doc_it->second.find(i);
    if (it == doc_it->second.end()) throw Error(ErrorCode::AlignmentError, key_string(doc.id, i) + " not in dump");
    if (table_.keys[it->second].tok != doc.tokens[i]) {
      throw Error(ErrorCode::AlignmentError, key_string(doc.id, i) + " token differs from dump");
    }
    out[i] = table_.log_probs[checkpoint][it->second];
  }
  return out;
}

DumpSeries ingest_dump(std::span<const std::filesystem::path> files) {
  if (files.empty()) throw Error(ErrorCode::EmptyInput, "no dump files given");
  struct Loaded {
    std::string model_id;
    CheckpointMeta meta;
    std::vector<TokenKey> keys;
    std::vector<double> lps;
    std::string source;
  };
  std::vector<Loaded> loaded;
  TokenId max_tok = 0;
  std::optional<std::size_t> declared_vocab;
  for (const auto& path : files) {
    Loaded l;
    l.source = path.string();
    std::ifstream meta_in(dump_meta_path(path), std::ios::binary);
    if (!meta_in) throw Error(ErrorCode::IoError, "missing sidecar " + dump_meta_path(path).string());
    try {
      nlohmann::json meta;
      meta_in >> meta;
      l.model_id = meta.at("model_id").get<std::string>();
      l.meta.step = meta.at("step").get<std::uint64_t>();
      l.meta.tokens_seen = meta.at("tokens_seen").get<std::uint64_t>();
      l.meta.params = meta.at("params").get<std::uint64_t>();
      l.meta.flops = flops(l.meta);
      if (meta.contains("vocab_size")) declared_vocab = meta["vocab_size"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, dump_meta_path(path).string() + ": " + e.what());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const auto rec = nlohmann::json::parse(line);
        TokenKey key{rec.at("doc").get<std::string>(), rec.at("pos").get<std::size_t>(), rec.at("tok").get<TokenId>()};
        const double lp = rec.at("lp").get<double>();
        if (!(lp <= 0.0)) {
          throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + " log_prob must be <= 0");
        }
        max_tok = std::max(max_tok, key.tok);
        l.keys.push_back(std::move(key));
        l.lps.push_back(lp);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    loaded.push_back(std::move(l));
  }
  std::stable_sort(loaded.begin(), loaded.end(),
                   [](const Loaded& a, const Loaded& b) { return a.meta.step < b.meta.step; });

  LogProbTable table;
  table.model_id = loaded.front().model_id;
  table.backend_kind = "dump";
  table.keys = loaded.front().keys;
  std::map<std::pair<std::string, std::size_t>, std::size_t> index;
  for (std::size_t i = 0; i < table.keys.size(); ++i) {
    if (!index.emplace(std::pair{table.keys[i].doc, table.keys[i].pos}, i).second) {
      throw Error(ErrorCode::AlignmentError,
                  "duplicate record " + key_string(table.keys[i].doc, table.keys[i].pos) + " in " + loaded.front().source);
    }
  }
  for (std::size_t c = 0; c < loaded.size(); ++c) {
    auto& l = loaded[c];
    if (l.model_id != table.model_id) {
      throw Error(ErrorCode::AlignmentError, "dumps mix models " + table.model_id + " and " + l.model_id);
    }
    l.meta.index = c;
    table.checkpoints.push_back(l.meta);
    std::vector<double> row(table.keys.size(), 0.0);
    std::vector<bool> filled(table.keys.size(), false);
    for (std::size_t i = 0; i < l.keys.size(); ++i) {
      auto it = index.find({l.keys[i].doc, l.keys[i].pos});
      if (it == index.end()) {
        throw Error(ErrorCode::AlignmentError, key_string(l.keys[i].doc, l.keys[i].pos) + " in " + l.source +
                                                   " but not in " + loaded.front().source);
      }
      if (filled[it->second]) {
        throw Error(ErrorCode::AlignmentError,
                    "duplicate record " + key_string(l.keys[i].doc, l.keys[i].pos) + " in " + l.source);
      }
      if (table.keys[it->second].tok != l.keys[i].tok) {
        throw Error(ErrorCode::AlignmentError,
                    key_string(l.keys[i].doc, l.keys[i].pos) + " token differs in " + l.source);
      }
      row[it->second] = l.lps[i];
      filled[it->second] = true;
    }
    for (std::size_t i = 0; i < filled.size(); ++i) {
      if (!filled[i]) {
        throw Error(ErrorCode::AlignmentError,
                    key_string(table.keys[i].doc, table.keys[i].pos) + " missing from " + l.source);
      }
    }
    table.log_probs.push_back(std::move(row));
  }
  const std::size_t vocab = declared_vocab.value_or(static_cast<std::size_t>(max_tok) + 1);
  return DumpSeries(std::move(table), vocab);
}

}  // namespace trajlab
