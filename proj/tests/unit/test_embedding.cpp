#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "chatguard/embedding.hpp"
#include "support.hpp"

using namespace chatguard;
using testsupport::fixture;

namespace {

ChatMessage msg(std::string text, std::string id = "m") {
  ChatMessage m;
  m.id = std::move(id);
  m.channel = "hasanabi";
  m.text = std::move(text);
  return m;
}

EmoteCatalog fixture_catalog() {
  return load_catalogs({fixture("global_emotes.json"), fixture("hasanabi_emotes.json")});
}

EmoteVectorSpace fixture_space() {
  auto s = load_vectors(fixture("emotes.vec"));
  s.set_global_names(load_global_names(fixture("global_names.json")));
  return s;
}

// Counts calls and fails (or returns a wrong width) for chosen texts.
class ScriptedProvider : public EmbeddingProvider {
 public:
  explicit ScriptedProvider(std::size_t d) : inner_(d) {}
  std::string id() const override { return "scripted-d" + std::to_string(inner_.dim()); }
  std::size_t dim() const override { return inner_.dim(); }
  ProviderMode mode() const override { return ProviderMode::pooled; }
  std::vector<ProviderOutput> compute(const std::vector<std::string>& texts) override {
    ++calls;
    std::vector<ProviderOutput> out;
    for (const auto& t : texts) {
      if (t.find("FAIL") != std::string::npos) throw Error(Errc::provider_error, "scripted failure");
      out.emplace_back(inner_.embed_text(t));
    }
    return out;
  }
  std::atomic<int> calls{0};

 private:
  HashingEmbedder inner_;
};

}  // namespace

TEST(ApplyStrategy, RawIsIdentity) {
  const auto cat = fixture_catalog();
  const auto space = fixture_space();
  for (const char* t : {"pepeD hi", "", "plain text", "h\xC3\xA9 pepeD"}) {
    EXPECT_EQ(apply_strategy(msg(t), Strategy::raw, &cat, &space).text, t);
  }
}

TEST(ApplyStrategy, EdInsertsDescriptionAfterEachOccurrence) {
  const auto cat = fixture_catalog();
  EXPECT_EQ(apply_strategy(msg("pepeD hi"), Strategy::ed, &cat, nullptr).text, "pepeD [pepeD: a dancing green frog] hi");
  EXPECT_EQ(apply_strategy(msg("pepeD pepeD"), Strategy::ed, &cat, nullptr).text,
            "pepeD [pepeD: a dancing green frog] pepeD [pepeD: a dancing green frog]");
  // No description, global emote, unknown token: untouched.
  EXPECT_EQ(apply_strategy(msg("hasO Kappa zzz"), Strategy::ed, &cat, nullptr).text, "hasO Kappa zzz");
  EXPECT_EQ(apply_strategy(msg("\xC3\xA9t\xC3\xA9 hasL!"), Strategy::ed, &cat, nullptr).text,
            "\xC3\xA9t\xC3\xA9 hasL!");
  EXPECT_EQ(apply_strategy(msg("\xC3\xA9t\xC3\xA9 hasL"), Strategy::ed, &cat, nullptr).text,
            "\xC3\xA9t\xC3\xA9 hasL [hasL: a man making a heart with his hands]");
}

TEST(ApplyStrategy, EgmReplacesWithNearestGlobal) {
  const auto cat = fixture_catalog();
  const auto space = fixture_space();
  EXPECT_EQ(apply_strategy(msg("pepeD hi"), Strategy::egm, &cat, &space).text, "Kappa hi");
  EXPECT_EQ(apply_strategy(msg("pepeD you hasMods pepeD"), Strategy::egm, &cat, &space).text,
            "Kappa you PogChamp Kappa");
  const auto missing = apply_strategy(msg("hasKiss hi"), Strategy::egm, &cat, &space);
  EXPECT_EQ(missing.text, "hasKiss hi");
  ASSERT_EQ(missing.warnings.size(), 1u);
  // Without a catalog the space alone identifies channel emotes.
  EXPECT_EQ(apply_strategy(msg("pepeD Kappa"), Strategy::egm, nullptr, &space).text, "Kappa Kappa");
}

TEST(ApplyStrategy, MissingContextLeavesTextWithWarning) {
  const auto a = apply_strategy(msg("pepeD"), Strategy::ed, nullptr, nullptr);
  EXPECT_EQ(a.text, "pepeD");
  EXPECT_EQ(a.warnings.size(), 1u);
  const auto b = apply_strategy(msg("pepeD"), Strategy::egm, nullptr, nullptr);
  EXPECT_EQ(b.text, "pepeD");
  EXPECT_EQ(b.warnings.size(), 1u);
}

TEST(ParseStrategy, Names) {
  EXPECT_EQ(parse_strategy("raw"), Strategy::raw);
  EXPECT_EQ(parse_strategy("ED"), Strategy::ed);
  EXPECT_EQ(parse_strategy("egm"), Strategy::egm);
  EXPECT_FALSE(parse_strategy("bogus").has_value());
}

TEST(MeanPool, Examples) {
  const auto a = mean_pool(TokenEmbeddingMatrix::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(a.vector, (std::vector<double>{2, 3}));
  const auto b = mean_pool(TokenEmbeddingMatrix::from_rows({{5, -5, 0.5}}));
  EXPECT_EQ(b.vector, (std::vector<double>{5, -5, 0.5}));
  EXPECT_EQ(b.d, 3u);
  try {
    mean_pool(TokenEmbeddingMatrix{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_matrix);
  }
  EXPECT_THROW(TokenEmbeddingMatrix::from_rows({{1, 2}, {3}}), Error);
}

TEST(MeanPoolProperty, RowPermutationAndDuplicationInvariant) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int t = 0; t < 200; ++t) {
    const std::size_t l = 1 + rng() % 20, d = 1 + rng() % 16;
    std::vector<std::vector<double>> rows(l, std::vector<double>(d));
    for (auto& r : rows) for (auto& x : r) x = u(rng);
    const auto base = mean_pool(TokenEmbeddingMatrix::from_rows(rows)).vector;
    auto perm = rows;
    std::shuffle(perm.begin(), perm.end(), rng);
    auto doubled = rows;
    doubled.insert(doubled.end(), rows.begin(), rows.end());
    const auto p = mean_pool(TokenEmbeddingMatrix::from_rows(perm)).vector;
    const auto dd = mean_pool(TokenEmbeddingMatrix::from_rows(doubled)).vector;
    for (std::size_t j = 0; j < d; ++j) {
      EXPECT_NEAR(p[j], base[j], 1e-12);
      EXPECT_NEAR(dd[j], base[j], 1e-12);
    }
  }
}

TEST(HashingEmbedder, DeterministicNormalizedAndDistinct) {
  HashingEmbedder h(64);
  EXPECT_EQ(h.id(), "hash-v1-d64");
  const auto a = h.embed_text("you are trash");
  EXPECT_EQ(a, HashingEmbedder(64).embed_text("you are trash"));
  double ss = 0;
  for (double x : a) ss += x * x;
  EXPECT_NEAR(ss, 1.0, 1e-12);
  EXPECT_NE(a, h.embed_text("you are great"));
  for (double x : h.embed_text("")) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(HashingEmbedder(0), Error);
}

TEST(Embed, TagsStrategyAndProvider) {
  HashingEmbedder h(32);
  const auto e = embed(AugmentedText{"hello there", Strategy::ed, {}}, h);
  EXPECT_EQ(e.d, 32u);
  EXPECT_EQ(e.strategy, Strategy::ed);
  EXPECT_EQ(e.provider_id, "hash-v1-d32");
}

TEST(MakeProvider, Specs) {
  EXPECT_EQ(make_provider("hash:128")->dim(), 128u);
  EXPECT_EQ(make_provider("hash")->dim(), 256u);
  EXPECT_THROW(make_provider("hash:zero"), Error);
  EXPECT_THROW(make_provider("http://127.0.0.1:1"), Error);  // no dim declared
  EXPECT_EQ(make_provider("http://127.0.0.1:1", 8)->id(), "http:remote:d8:mean");
}

// --- /embed contract against a local server --------------------------------

namespace {

struct FakeEmbed {
  testsupport::LocalServer srv;
  std::size_t dim;
  std::size_t report_dim;
  std::atomic<int> calls{0};

  explicit FakeEmbed(std::size_t d, std::size_t reported = 0) : dim(d), report_dim(reported ? reported : d) {
    srv.server().Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      const auto body = json::parse(req.body);
      const bool pooled = body.value("pooling", "mean") == "mean";
      json embs = json::array();
      for (const auto& t : body["texts"]) {
        const auto text = t.get<std::string>();
        // Token rows: row i holds (i+1) * len(text) in every column.
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < 3; ++i) rows.emplace_back(dim, static_cast<double>((i + 1) * text.size()));
        if (pooled) embs.push_back(std::vector<double>(dim, 2.0 * static_cast<double>(text.size())));
        else embs.push_back(rows);
      }
      res.set_content(json{{"dim", report_dim}, {"embeddings", embs}}.dump(), "application/json");
    });
    srv.start();
  }
};

}  // namespace

TEST(HttpProvider, PooledAndTokenModesAgree) {
  FakeEmbed fake(5);
  HttpEmbeddingProvider pooled({fake.srv.url("/"), 5, ProviderMode::pooled});
  HttpEmbeddingProvider tokens({fake.srv.url(), 5, ProviderMode::token_matrix});
  EXPECT_EQ(pooled.id(), "http:remote:d5:mean");
  EXPECT_EQ(tokens.id(), "http:remote:d5:none");
  const AugmentedText t{"abcd", Strategy::raw, {}};
  const auto a = embed(t, pooled);
  const auto b = embed(t, tokens);
  EXPECT_EQ(a.vector, std::vector<double>(5, 8.0));
  EXPECT_EQ(b.vector, a.vector);
  EXPECT_EQ(fake.calls.load(), 2);
}

TEST(HttpProvider, ReportedDimensionMismatch) {
  FakeEmbed fake(4, 6);
  HttpEmbeddingProvider p({fake.srv.url("/embed"), 4, ProviderMode::pooled});
  try {
    embed(AugmentedText{"x", Strategy::raw, {}}, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
  }
}

TEST(HttpProvider, ActualWidthMismatchAndOffline) {
  FakeEmbed fake(4);
  {
    // Server claims the declared width but sends 4 values to a 3-wide provider.
    FakeEmbed liar(4, 3);
    HttpEmbeddingProvider p({liar.srv.url("/embed"), 3, ProviderMode::pooled});
    try {
      embed(AugmentedText{"x", Strategy::raw, {}}, p);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::dimension_mismatch);
    }
  }
  HttpProviderConfig off{"http://127.0.0.1:1/embed", 4, ProviderMode::pooled, std::chrono::milliseconds(500)};
  HttpEmbeddingProvider p(off);
  try {
    embed(AugmentedText{"x", Strategy::raw, {}}, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::provider_error);
  }
}

// --- corpus embedding and cache ------------------------------------------

TEST(EmbedCorpus, WritesCachedRecordsAndResumes) {
  testsupport::TempDir dir;
  const auto cache = dir.file("cache.jsonl");
  std::vector<ChatMessage> corpus;
  for (int i = 0; i < 10; ++i) {
    auto m = msg("comment number " + std::to_string(i), "id" + std::to_string(i));
    m.label = i % 3 == 0 ? Label::toxic : Label::non_toxic;
    corpus.push_back(m);
  }
  ScriptedProvider p(16);
  const auto r1 = embed_corpus(corpus, Strategy::raw, p, cache, {nullptr, nullptr, 3});
  EXPECT_EQ(r1.written, 10u);
  EXPECT_TRUE(r1.failures.empty());
  const int after_first = p.calls.load();
  EXPECT_EQ(after_first, 10);

  const auto back = read_embedding_cache(cache, true);
  ASSERT_EQ(back.records.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(back.records[i].id, "id" + std::to_string(i));  // input order
    EXPECT_EQ(back.records[i].provider, "scripted-d16");
    EXPECT_EQ(back.records[i].vector.size(), 16u);
    EXPECT_EQ(back.records[i].label, corpus[i].label);
  }

  const auto r2 = embed_corpus(corpus, Strategy::raw, p, cache);
  EXPECT_EQ(r2.written, 0u);
  EXPECT_EQ(r2.skipped_cached, 10u);
  EXPECT_EQ(p.calls.load(), after_first);

  // A different strategy is a different cache key.
  const auto cat = fixture_catalog();
  const auto r3 = embed_corpus(corpus, Strategy::ed, p, cache, {&cat, nullptr, 2});
  EXPECT_EQ(r3.written, 10u);
}

TEST(EmbedCorpus, FailedMessageRecordedAndRetriedLater) {
  testsupport::TempDir dir;
  const auto cache = dir.file("cache.jsonl");
  std::vector<ChatMessage> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(msg(i == 4 ? "FAIL here" : "ok " + std::to_string(i), "id" + std::to_string(i)));
  ScriptedProvider p(8);
  const auto r = embed_corpus(corpus, Strategy::raw, p, cache, {nullptr, nullptr, 4});
  EXPECT_EQ(r.written, 9u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].first, "id4");
  EXPECT_EQ(read_embedding_cache(cache).records.size(), 9u);

  corpus[4].text = "fixed now";
  const auto again = embed_corpus(corpus, Strategy::raw, p, cache);
  EXPECT_EQ(again.written, 1u);
  EXPECT_EQ(again.skipped_cached, 9u);
}

TEST(EmbeddingCache, SkipsCorruptLinesAndRequiresFileWhenAsked) {
  testsupport::TempDir dir;
  const auto cache = dir.file("c.jsonl");
  testsupport::write_file(cache, R"({"id":"a","strategy":"raw","provider":"p","vector":[1,2]})"
                                 "\nnot json\n"
                                 R"({"id":"b","strategy":"nope","provider":"p","vector":[1]})" "\n");
  const auto r = read_embedding_cache(cache);
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.error_count, 2u);
  EXPECT_TRUE(read_embedding_cache(dir.file("absent.jsonl")).records.empty());
  EXPECT_THROW(read_embedding_cache(dir.file("absent.jsonl"), true), Error);
}
