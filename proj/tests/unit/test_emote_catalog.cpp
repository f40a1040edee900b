#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "chatguard/chat_ingest.hpp"
#include "chatguard/emote_catalog.hpp"
#include "support.hpp"

using namespace chatguard;
using testsupport::fixture;

namespace {

EmoteCatalog small_catalog() {
  EmoteCatalog c;
  c.add("Kappa", {EmoteKind::global, std::nullopt, std::nullopt});
  c.add("LUL", {EmoteKind::global, std::nullopt, std::nullopt});
  c.add("pepeD", {EmoteKind::channel, "hasanabi", "a dancing green frog"});
  c.add("hasL", {EmoteKind::channel, "hasanabi", std::nullopt});
  return c;
}

ChatMessage msg(std::string text) {
  ChatMessage m;
  m.id = text;
  m.text = std::move(text);
  return m;
}

EmoteCatalog fixture_catalog() {
  return load_catalogs({fixture("global_emotes.json"), fixture("hasanabi_emotes.json")});
}

}  // namespace

TEST(ExtractEmotes, GlobalToken) {
  const auto m = extract_emotes(msg("Kappa hello"), small_catalog());
  ASSERT_EQ(m.emote_spans.size(), 1u);
  EXPECT_EQ(m.emote_spans[0].kind, EmoteKind::global);
  EXPECT_EQ(m.emote_spans[0].start, 0u);
  EXPECT_EQ(m.emote_spans[0].end, 4u);
}

TEST(ExtractEmotes, RepeatedChannelToken) {
  const auto m = extract_emotes(msg("pepeD pepeD"), small_catalog());
  ASSERT_EQ(m.emote_spans.size(), 2u);
  EXPECT_EQ(m.emote_spans[0].kind, EmoteKind::channel);
  EXPECT_EQ(m.emote_spans[1].kind, EmoteKind::channel);
  EXPECT_EQ(m.emote_spans[1].start, 6u);
}

TEST(ExtractEmotes, CaseSensitiveAndWholeToken) {
  EXPECT_TRUE(extract_emotes(msg("kappa"), small_catalog()).emote_spans.empty());
  EXPECT_TRUE(extract_emotes(msg("KappaKappa xLUL"), small_catalog()).emote_spans.empty());
}

TEST(ExtractEmotes, TagSpansAreReKindedNotDuplicated) {
  const auto parsed = parse_irc_line("@emotes=25:0-4 :u!u@u PRIVMSG #c :Kappa pepeD");
  const auto m = extract_emotes(parsed, small_catalog());
  ASSERT_EQ(m.emote_spans.size(), 2u);
  EXPECT_EQ(m.emote_spans[0].emote_id, "25");
  EXPECT_EQ(m.emote_spans[0].kind, EmoteKind::global);
  EXPECT_EQ(m.emote_spans[1].name, "pepeD");
  EXPECT_FALSE(span_violation(m).has_value());
}

TEST(ExtractEmotes, Idempotent) {
  const auto cat = small_catalog();
  for (const char* t : {"Kappa hi pepeD", "pepeD  pepeD\tLUL", "nothing here", "h\xC3\xA9 hasL"}) {
    const auto once = extract_emotes(msg(t), cat);
    EXPECT_EQ(extract_emotes(once, cat), once) << t;
  }
}

TEST(Catalog, ChannelBeatsGlobalOnCollision) {
  EmoteCatalog a;
  a.add("Same", {EmoteKind::channel, "c", "channel meaning"});
  a.add("Same", {EmoteKind::global, std::nullopt, "global meaning"});
  EXPECT_EQ(a.find("Same")->kind, EmoteKind::channel);

  EmoteCatalog b;
  b.add("Same", {EmoteKind::global, std::nullopt, std::nullopt});
  b.add("Same", {EmoteKind::channel, "c", std::nullopt});
  EXPECT_EQ(b.find("Same")->kind, EmoteKind::channel);
}

TEST(Catalog, LoadsAndMergesFiles) {
  const auto cat = fixture_catalog();
  EXPECT_EQ(cat.size(), 12u);
  EXPECT_EQ(cat.find("pepeD")->channel, "hasanabi");
  EXPECT_EQ(cat.find("Kappa")->kind, EmoteKind::global);
  EXPECT_FALSE(cat.find("hasO")->description.has_value());
}

TEST(Catalog, RejectsBadEntries) {
  EmoteCatalog c;
  EXPECT_THROW(c.add("", {EmoteKind::global, std::nullopt, std::nullopt}), Error);
  EXPECT_THROW(c.add("x", {EmoteKind::channel, std::nullopt, std::nullopt}), Error);
  c.add("y", {EmoteKind::global, std::nullopt, std::string{}});
  EXPECT_FALSE(c.find("y")->description.has_value());
  EXPECT_THROW(catalog_from_json(json::parse(R"({"emotes":[{"kind":"global"}]})")), Error);
  EXPECT_THROW(load_catalog("/nonexistent/catalog.json"), Error);
}

TEST(UsageStats, TwoSingleChannelComments) {
  const auto st = usage_stats({msg("pepeD hi"), msg("so hasL")}, small_catalog());
  EXPECT_DOUBLE_EQ(st.buckets[1].channel_pct, 1.0);
  EXPECT_DOUBLE_EQ(st.buckets[1].global_pct, 0.0);
  EXPECT_EQ(st.buckets[1].comment_count, 2u);
  EXPECT_DOUBLE_EQ(st.mean_emotes_per_comment, 1.0);
}

TEST(UsageStats, MixedPair) {
  const auto st = usage_stats({msg("Kappa pepeD")}, small_catalog());
  EXPECT_DOUBLE_EQ(st.buckets[2].global_pct, 0.5);
  EXPECT_DOUBLE_EQ(st.buckets[2].channel_pct, 0.5);
  EXPECT_DOUBLE_EQ(st.mean_emotes_per_comment, 2.0);
}

TEST(UsageStats, FourteenOverTenComments) {
  const auto log = read_log(fixture("hasan.jsonl"));
  ASSERT_EQ(log.messages.size(), 10u);
  const auto st = usage_stats(log.messages, fixture_catalog());
  EXPECT_EQ(st.emote_occurrences, 14u);
  EXPECT_NEAR(st.mean_emotes_per_comment, 1.4, 1e-12);
  EXPECT_GT(st.channel_share, 0.8);
}

TEST(UsageStats, OverFiveBucketAndEmpty) {
  const auto st = usage_stats({msg("LUL LUL LUL LUL LUL LUL pepeD")}, small_catalog());
  EXPECT_EQ(st.buckets[6].comment_count, 1u);
  EXPECT_NEAR(st.buckets[6].global_pct, 6.0 / 7.0, 1e-15);
  EXPECT_THROW(usage_stats({}, small_catalog()), Error);
}

TEST(UsageStats, UnknownTagSpansAreNotCounted) {
  const auto parsed = parse_irc_line("@emotes=999:0-4 :u!u@u PRIVMSG #c :Zzzzz Kappa");
  const auto st = usage_stats({parsed}, small_catalog());
  EXPECT_EQ(st.emote_occurrences, 1u);
  EXPECT_EQ(st.unknown_occurrences, 1u);
  EXPECT_EQ(st.buckets[1].comment_count, 1u);
}

// Property checks over random corpora.
TEST(UsageStatsProperty, InvariantsHold) {
  const auto cat = small_catalog();
  const std::vector<std::string> vocab{"Kappa", "LUL", "pepeD", "hasL", "hi", "chat", "kappa", "w"};
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ChatMessage> corpus;
    const int n = 1 + static_cast<int>(rng() % 30);
    std::size_t expected_total = 0;
    for (int i = 0; i < n; ++i) {
      std::string text = "x";
      const int toks = static_cast<int>(rng() % 9);
      for (int t = 0; t < toks; ++t) {
        const auto& w = vocab[rng() % vocab.size()];
        text += " " + w;
        expected_total += cat.contains(w);
      }
      corpus.push_back(msg(text));
    }
    const auto st = usage_stats(corpus, cat);
    EXPECT_NEAR(st.mean_emotes_per_comment, static_cast<double>(expected_total) / n, 1e-9);
    std::size_t comments = 0;
    for (const auto& b : st.buckets) {
      comments += b.comment_count;
      if (b.global_occurrences + b.channel_occurrences > 0) EXPECT_NEAR(b.global_pct + b.channel_pct, 1.0, 1e-12);
    }
    EXPECT_EQ(comments, corpus.size());

    auto shuffled = corpus;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(to_json(usage_stats(shuffled, cat)), to_json(st));

    auto plus = corpus;
    plus.push_back(msg("no emotes at all"));
    const auto st2 = usage_stats(plus, cat);
    EXPECT_EQ(st2.buckets[0].comment_count, st.buckets[0].comment_count + 1);
    for (std::size_t b = 1; b < st.buckets.size(); ++b) {
      EXPECT_EQ(st2.buckets[b].comment_count, st.buckets[b].comment_count);
      EXPECT_EQ(st2.buckets[b].global_pct, st.buckets[b].global_pct);
    }
    EXPECT_NEAR(st2.mean_emotes_per_comment, static_cast<double>(expected_total) / (n + 1), 1e-9);
  }
}

TEST(UsageStats, JsonAndCsvOutput) {
  const auto st = usage_stats({msg("Kappa pepeD"), msg("hi")}, small_catalog());
  const auto j = to_json(st);
  EXPECT_EQ(j["buckets"]["2"]["comment_count"], 1);
  EXPECT_EQ(j["buckets"][">5"]["comment_count"], 0);
  std::ostringstream csv;
  write_stats_csv(csv, st);
  const std::string text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "bucket,comment_count,global_occurrences,channel_occurrences,global_pct,channel_pct");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 8);
}
