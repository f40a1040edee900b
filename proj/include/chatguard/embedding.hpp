#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <variant>
#include <vector>

#include "chatguard/chat_ingest.hpp"
#include "chatguard/emote_catalog.hpp"
#include "chatguard/emote_context.hpp"
#include "chatguard/emote_space.hpp"
#include "chatguard/error.hpp"
#include "chatguard/http.hpp"
#include "chatguard/message.hpp"

namespace chatguard {

enum class Strategy { raw, ed, egm };

constexpr std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::raw: return "RAW";
    case Strategy::ed: return "ED";
    case Strategy::egm: return "EGM";
  }
  return "RAW";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "RAW" || s == "raw") return Strategy::raw;
  if (s == "ED" || s == "ed") return Strategy::ed;
  if (s == "EGM" || s == "egm") return Strategy::egm;
  return std::nullopt;
}

struct AugmentedText {
  std::string text;
  Strategy strategy = Strategy::raw;
  std::vector<std::string> warnings;
};

namespace detail {

struct Edit {
  std::size_t byte_begin;
  std::size_t byte_end;  // exclusive; equal to byte_begin for pure insertions
  std::string replacement;
};

inline std::string apply_edits(const std::string& text, const std::vector<Edit>& edits) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& e : edits) {
    out.append(text, pos, e.byte_begin - pos);
    out += e.replacement;
    pos = e.byte_end;
  }
  out.append(text, pos, std::string::npos);
  return out;
}

}  // namespace detail

/// RAW: text unchanged. ED: ` [<emote>: <description>]` inserted after every
/// described channel-emote occurrence. EGM: each channel emote the space can
/// map is replaced by its nearest global emote. Missing context leaves the
/// affected emote as-is.
inline AugmentedText apply_strategy(const ChatMessage& message, Strategy strategy, const EmoteCatalog* catalog,
                                    const EmoteVectorSpace* space) {
  AugmentedText out{message.text, strategy, {}};
  if (strategy == Strategy::raw) return out;
  if (strategy == Strategy::ed && !catalog) {
    out.warnings.push_back("ED strategy without a catalog; text left unchanged");
    return out;
  }
  if (strategy == Strategy::egm && !space) {
    out.warnings.push_back("EGM strategy without a vector space; text left unchanged");
    return out;
  }
  auto offs = utf8::code_point_offsets(message.text);
  if (!offs) {
    out.warnings.push_back("text is not valid UTF-8; text left unchanged");
    return out;
  }
  const auto occurrences =
      channel_emote_occurrences(message, catalog, strategy == Strategy::egm ? space : nullptr);
  std::vector<detail::Edit> edits;
  std::map<std::string, std::optional<std::string>, std::less<>> nearest;
  for (const auto& occ : occurrences) {
    const std::size_t b = (*offs)[occ.start];
    const std::size_t e = (*offs)[occ.end + 1];
    if (strategy == Strategy::ed) {
      if (auto desc = describe(occ.name, *catalog)) edits.push_back({e, e, " [" + occ.name + ": " + *desc + "]"});
      continue;
    }
    auto it = nearest.find(occ.name);
    if (it == nearest.end()) {
      std::optional<std::string> g;
      if (!space->contains(occ.name)) {
        out.warnings.push_back("channel emote '" + occ.name + "' not in vector space; left unmapped");
      } else {
        try {
          g = top_k_global(occ.name, *space, 1).neighbors.front().first;
        } catch (const Error& ex) {
          out.warnings.push_back("channel emote '" + occ.name + "': " + ex.what());
        }
      }
      it = nearest.emplace(occ.name, g).first;
    }
    if (it->second) edits.push_back({b, e, *it->second});
  }
  out.text = detail::apply_edits(message.text, edits);
  return out;
}

// ---------------------------------------------------------------------------
// Token matrices and pooling

/// L x d token embeddings, row-major.
struct TokenEmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  TokenEmbeddingMatrix() = default;
  TokenEmbeddingMatrix(std::size_t l, std::size_t d) : rows(l), cols(d), values(l * d, 0.0) {}

  static TokenEmbeddingMatrix from_rows(const std::vector<std::vector<double>>& r) {
    TokenEmbeddingMatrix m(r.size(), r.empty() ? 0 : r.front().size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i].size() != m.cols) throw Error(Errc::dimension_mismatch, "ragged token matrix");
      std::copy(r[i].begin(), r[i].end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    }
    return m;
  }

  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct MessageEmbedding {
  std::vector<double> vector;
  std::size_t d = 0;
  Strategy strategy = Strategy::raw;
  std::string provider_id;
};

/// e[j] = (1/L) * sum_i H[i][j]
inline MessageEmbedding mean_pool(const TokenEmbeddingMatrix& h) {
  if (h.rows == 0) throw Error(Errc::empty_matrix, "cannot mean-pool an empty token matrix");
  MessageEmbedding e;
  e.d = h.cols;
  e.vector.assign(h.cols, 0.0);
  for (std::size_t i = 0; i < h.rows; ++i) {
    const double* row = h.values.data() + i * h.cols;
    for (std::size_t j = 0; j < h.cols; ++j) e.vector[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(h.rows);
  for (auto& v : e.vector) v *= inv;
  return e;
}

// ---------------------------------------------------------------------------
// Providers

enum class ProviderMode { token_matrix, pooled };

using ProviderOutput = std::variant<std::vector<double>, TokenEmbeddingMatrix>;

/// Maps texts to either token matrices or pooled vectors of the declared
/// dimensionality. Must be deterministic for identical text and thread-safe.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual ProviderMode mode() const = 0;
  virtual std::vector<ProviderOutput> compute(const std::vector<std::string>& texts) = 0;
};

/// Offline embedder: each whitespace token is hashed (FNV-1a 64) into one of
/// d buckets with a hash-derived sign, then the vector is L2-normalized.
class HashingEmbedder : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t d = 256) : d_(d) {
    if (d == 0) throw Error(Errc::invalid_argument, "embedding dimension must be positive");
  }

  std::string id() const override { return "hash-v1-d" + std::to_string(d_); }
  std::size_t dim() const override { return d_; }
  ProviderMode mode() const override { return ProviderMode::pooled; }

  std::vector<double> embed_text(std::string_view text) const {
    std::vector<double> v(d_, 0.0);
    for (const auto& tok : utf8::tokenize(text)) {
      const std::uint64_t h = detail::fnv1a64(tok.text);
      v[h % d_] += (h >> 63) ? -1.0 : 1.0;
    }
    double ss = 0.0;
    for (double x : v) ss += x * x;
    if (ss > 0.0) {
      const double inv = 1.0 / std::sqrt(ss);
      for (auto& x : v) x *= inv;
    }
    return v;
  }

  std::vector<ProviderOutput> compute(const std::vector<std::string>& texts) override {
    std::vector<ProviderOutput> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.emplace_back(embed_text(t));
    return out;
  }

 private:
  std::size_t d_;
};

struct HttpProviderConfig {
  std::string url;  // base URL of the service; "/embed" is appended when no path is given
  std::size_t dim = 0;
  ProviderMode mode = ProviderMode::pooled;
  std::chrono::milliseconds timeout{30000};
  std::string model_tag = "remote";
};

/// Client for POST /embed {"texts":[...], "pooling":"mean"|"none"} ->
/// {"dim":d, "embeddings":[...]} ("none" nests per-token rows).
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.dim == 0) throw Error(Errc::config_error, "HTTP embedding provider needs a declared dimension");
    auto u = http::split_url(cfg_.url);
    endpoint_ = u.path == "/" ? u.origin + "/embed" : cfg_.url;
  }

  std::string id() const override {
    return "http:" + cfg_.model_tag + ":d" + std::to_string(cfg_.dim) +
           (cfg_.mode == ProviderMode::pooled ? ":mean" : ":none");
  }
  std::size_t dim() const override { return cfg_.dim; }
  ProviderMode mode() const override { return cfg_.mode; }

  std::vector<ProviderOutput> compute(const std::vector<std::string>& texts) override {
    const json body{{"texts", texts}, {"pooling", cfg_.mode == ProviderMode::pooled ? "mean" : "none"}};
    const json res = http::post_json(endpoint_, body, {cfg_.timeout, {}}, Errc::provider_error);
    std::vector<ProviderOutput> out;
    try {
      const auto reported = res.at("dim").get<std::size_t>();
      if (reported != cfg_.dim) {
        throw Error(Errc::dimension_mismatch, "provider reports dim " + std::to_string(reported) + ", expected " +
                                                  std::to_string(cfg_.dim));
      }
      const auto& embs = res.at("embeddings");
      if (embs.size() != texts.size()) throw Error(Errc::provider_error, "provider returned wrong number of embeddings");
      for (const auto& e : embs) {
        if (cfg_.mode == ProviderMode::pooled) out.emplace_back(e.get<std::vector<double>>());
        else out.emplace_back(TokenEmbeddingMatrix::from_rows(e.get<std::vector<std::vector<double>>>()));
      }
    } catch (const json::exception& ex) {
      throw Error(Errc::provider_error, std::string("bad /embed response: ") + ex.what());
    }
    return out;
  }

 private:
  HttpProviderConfig cfg_;
  std::string endpoint_;
};

namespace detail {

inline MessageEmbedding finish_embedding(ProviderOutput&& out, const EmbeddingProvider& provider) {
  MessageEmbedding e;
  if (auto* m = std::get_if<TokenEmbeddingMatrix>(&out)) {
    if (m->cols != provider.dim()) {
      throw Error(Errc::dimension_mismatch, "token rows have " + std::to_string(m->cols) + " columns, provider declares " +
                                                std::to_string(provider.dim()));
    }
    e = mean_pool(*m);
  } else {
    e.vector = std::move(std::get<std::vector<double>>(out));
    e.d = e.vector.size();
  }
  if (e.vector.size() != provider.dim()) {
    throw Error(Errc::dimension_mismatch, "embedding has " + std::to_string(e.vector.size()) +
                                              " values, provider declares " + std::to_string(provider.dim()));
  }
  for (double v : e.vector) {
    if (!std::isfinite(v)) throw Error(Errc::provider_error, "provider returned a non-finite value");
  }
  e.d = provider.dim();
  e.provider_id = provider.id();
  return e;
}

}  // namespace detail

inline MessageEmbedding embed(const AugmentedText& text, EmbeddingProvider& provider) {
  auto outs = provider.compute({text.text});
  if (outs.size() != 1) throw Error(Errc::provider_error, "provider returned wrong number of outputs");
  auto e = detail::finish_embedding(std::move(outs.front()), provider);
  e.strategy = text.strategy;
  return e;
}

// ---------------------------------------------------------------------------
// Corpus embedding with an append-only JSONL cache

struct CacheRecord {
  std::string id;
  Strategy strategy = Strategy::raw;
  std::string provider;
  std::vector<double> vector;
  std::optional<Label> label;
};

inline json to_json(const CacheRecord& r) {
  json j{{"id", r.id}, {"strategy", std::string(to_string(r.strategy))}, {"provider", r.provider}, {"vector", r.vector}};
  if (r.label) j["label"] = std::string(to_string(*r.label));
  return j;
}

struct CacheReadResult {
  std::vector<CacheRecord> records;
  std::size_t error_count = 0;
};

/// Missing file yields an empty result; unreadable or torn lines are skipped.
inline CacheReadResult read_embedding_cache(const std::string& path, bool must_exist = false) {
  CacheReadResult res;
  std::ifstream in(path);
  if (!in) {
    if (must_exist) throw Error(Errc::file_unreadable, "cannot open embeddings file: " + path);
    return res;
  }
  std::string line;
  while (std::getline(in, line)) {
    if (utf8::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      CacheRecord r;
      r.id = j.at("id").get<std::string>();
      auto s = parse_strategy(j.at("strategy").get<std::string>());
      if (!s) throw Error(Errc::corrupt_file, "bad strategy");
      r.strategy = *s;
      r.provider = j.at("provider").get<std::string>();
      r.vector = j.at("vector").get<std::vector<double>>();
      if (j.contains("label") && j["label"].is_string()) r.label = parse_label(j["label"].get<std::string>());
      res.records.push_back(std::move(r));
    } catch (const std::exception&) {
      ++res.error_count;
    }
  }
  return res;
}

struct EmbedCorpusOptions {
  const EmoteCatalog* catalog = nullptr;
  const EmoteVectorSpace* space = nullptr;
  std::size_t concurrency = 4;
};

struct EmbedCorpusResult {
  std::size_t written = 0;
  std::size_t skipped_cached = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (message id, error)
};

/// Embeds every message not already cached under (id, strategy, provider) and
/// appends records in input order. Provider failures are recorded per message;
/// re-running resumes from the cache.
inline EmbedCorpusResult embed_corpus(const std::vector<ChatMessage>& messages, Strategy strategy,
                                      EmbeddingProvider& provider, const std::string& cache_path,
                                      const EmbedCorpusOptions& opts = {}) {
  EmbedCorpusResult result;
  const std::string pid = provider.id();
  std::set<std::string> done;
  for (const auto& r : read_embedding_cache(cache_path).records) {
    if (r.strategy == strategy && r.provider == pid) done.insert(r.id);
  }
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (done.count(messages[i].id)) ++result.skipped_cached;
    else todo.push_back(i);
  }
  if (todo.empty()) return result;

  std::ofstream out(cache_path, std::ios::app);
  if (!out) throw Error(Errc::file_unreadable, "cannot append to embedding cache: " + cache_path);

  // Workers fill slots; the writer flushes the completed prefix so records
  // land in input order regardless of completion order.
  struct Slot {
    bool ready = false;
    std::optional<CacheRecord> record;
    std::string error;
  };
  std::vector<Slot> slots(todo.size());
  std::mutex mu;
  std::size_t next = 0, flushed = 0;

  auto flush_prefix = [&] {
    while (flushed < slots.size() && slots[flushed].ready) {
      auto& s = slots[flushed];
      if (s.record) {
        out << to_json(*s.record).dump() << '\n';
        ++result.written;
      } else {
        result.failures.emplace_back(messages[todo[flushed]].id, s.error);
      }
      s.record.reset();
      ++flushed;
    }
    out.flush();
  };

  auto worker = [&] {
    for (;;) {
      std::size_t k;
      {
        std::lock_guard lock(mu);
        if (next >= todo.size()) return;
        k = next++;
      }
      const ChatMessage& m = messages[todo[k]];
      Slot s;
      try {
        const auto aug = apply_strategy(m, strategy, opts.catalog, opts.space);
        auto e = embed(aug, provider);
        s.record = CacheRecord{m.id, strategy, pid, std::move(e.vector), m.label};
      } catch (const std::exception& ex) {
        s.error = ex.what();
      }
      s.ready = true;
      std::lock_guard lock(mu);
      slots[k] = std::move(s);
      flush_prefix();
    }
  };
  const std::size_t n_workers = std::min(std::max<std::size_t>(1, opts.concurrency), todo.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return result;
}

/// Parses a provider spec: "hash:<d>" or an http URL (requires `dim`).
inline std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec, std::size_t dim = 0,
                                                        bool token_mode = false) {
  if (spec.rfind("hash", 0) == 0) {
    std::size_t d = dim ? dim : 256;
    if (auto colon = spec.find(':'); colon != std::string::npos) {
      if (!detail::parse_int(std::string_view(spec).substr(colon + 1), d) || d == 0) {
        throw Error(Errc::config_error, "bad hash provider spec: " + spec);
      }
    }
    return std::make_unique<HashingEmbedder>(d);
  }
  HttpProviderConfig cfg;
  cfg.url = spec;
  cfg.dim = dim;
  cfg.mode = token_mode ? ProviderMode::token_matrix : ProviderMode::pooled;
  return std::make_unique<HttpEmbeddingProvider>(cfg);
}

}  // namespace chatguard
