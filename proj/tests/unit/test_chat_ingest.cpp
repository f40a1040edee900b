#include <gtest/gtest.h>

#include <random>

#include "chatguard/chat_ingest.hpp"
#include "support.hpp"

using namespace chatguard;
using testsupport::fixture;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::invalid_argument;  // sentinel: nothing thrown
}

}  // namespace

TEST(ParseIrcLine, DecodesEmotesTag) {
  const auto m = parse_irc_line("@emotes=25:0-4 :u!u@u.tmi.twitch.tv PRIVMSG #c :Kappa hi");
  EXPECT_EQ(m.channel, "c");
  EXPECT_EQ(m.author, "u");
  EXPECT_EQ(m.text, "Kappa hi");
  ASSERT_EQ(m.emote_spans.size(), 1u);
  EXPECT_EQ(m.emote_spans[0].name, "Kappa");
  EXPECT_EQ(m.emote_spans[0].emote_id, "25");
  EXPECT_EQ(m.emote_spans[0].start, 0u);
  EXPECT_EQ(m.emote_spans[0].end, 4u);
  EXPECT_EQ(m.emote_spans[0].kind, EmoteKind::unknown);
}

TEST(ParseIrcLine, NoTagsGivesNoSpans) {
  const auto m = parse_irc_line(":u!u@u.tmi.twitch.tv PRIVMSG #c :hello");
  EXPECT_EQ(m.text, "hello");
  EXPECT_TRUE(m.emote_spans.empty());
  EXPECT_FALSE(m.id.empty());
}

TEST(ParseIrcLine, SpanPastTextIsMalformed) {
  EXPECT_EQ(code_of([] { parse_irc_line("@emotes=25:0-99 :u!u@u.tmi.twitch.tv PRIVMSG #c :Kappa"); }),
            Errc::malformed_line);
}

TEST(ParseIrcLine, OffsetsAreCodePoints) {
  // "héllo Kappa": the emote starts at code point 6 but byte 7.
  const auto m = parse_irc_line("@emotes=25:6-10 :u!u@u PRIVMSG #c :h\xC3\xA9llo Kappa");
  ASSERT_EQ(m.emote_spans.size(), 1u);
  EXPECT_EQ(m.emote_spans[0].name, "Kappa");
  EXPECT_FALSE(span_violation(m).has_value());
}

TEST(ParseIrcLine, MultipleRangesAndIdsAreSorted) {
  const auto m = parse_irc_line("@emotes=1902:6-10/25:0-4,12-16 :u!u@u PRIVMSG #c :Kappa Keepo Kappa");
  ASSERT_EQ(m.emote_spans.size(), 3u);
  EXPECT_EQ(m.emote_spans[0].name, "Kappa");
  EXPECT_EQ(m.emote_spans[1].name, "Keepo");
  EXPECT_EQ(m.emote_spans[1].emote_id, "1902");
  EXPECT_EQ(m.emote_spans[2].start, 12u);
}

TEST(ParseIrcLine, TagsTimestampIdAndEscapes) {
  const auto m = parse_irc_line(
      "@display-name=Some\\sOne;id=abc-123;tmi-sent-ts=1700000000123;user-id=42 :someone!someone@x PRIVMSG #chan "
      ":hi there");
  EXPECT_EQ(m.id, "abc-123");
  EXPECT_EQ(m.timestamp_ms, 1700000000123);
  EXPECT_EQ(m.author, "someone");
  EXPECT_EQ(detail::unescape_tag_value("a\\:b\\sc\\\\d"), "a;b c\\d");
}

TEST(ParseIrcLine, ActionWrapperIsStripped) {
  const auto m = parse_irc_line("@emotes=25:0-4 :u!u@u PRIVMSG #c :\x01" "ACTION Kappa waves\x01");
  EXPECT_EQ(m.text, "Kappa waves");
  ASSERT_EQ(m.emote_spans.size(), 1u);
  EXPECT_EQ(m.emote_spans[0].name, "Kappa");
}

TEST(ParseIrcLine, RejectsNonPrivmsgAndEmptyText) {
  EXPECT_EQ(code_of([] { parse_irc_line(":tmi.twitch.tv 001 justinfan1 :Welcome"); }), Errc::malformed_line);
  EXPECT_EQ(code_of([] { parse_irc_line(":u!u@u PRIVMSG #c :   "); }), Errc::malformed_line);
  EXPECT_EQ(code_of([] { parse_irc_line(":u!u@u PRIVMSG c :hi"); }), Errc::malformed_line);
  EXPECT_EQ(code_of([] { parse_irc_line("@emotes=x :u!u@u PRIVMSG #c :hi"); }), Errc::malformed_line);
  EXPECT_EQ(code_of([] { parse_irc_line("@emotes=25:3-1 :u!u@u PRIVMSG #c :Kappa"); }), Errc::malformed_line);
  EXPECT_EQ(code_of([] { parse_irc_line("@emotes=25:0-1,1-2 :u!u@u PRIVMSG #c :Kappa"); }), Errc::malformed_line);
  EXPECT_EQ(code_of([] { parse_irc_line(""); }), Errc::malformed_line);
}

TEST(ParseIrcLine, DerivedIdIsStable) {
  const std::string line = ":u!u@u PRIVMSG #c :same text";
  EXPECT_EQ(parse_irc_line(line).id, parse_irc_line(line).id);
  EXPECT_NE(parse_irc_line(line).id, parse_irc_line(":u!u@u PRIVMSG #c :other text").id);
}

// Random valid lines: every decoded span's substring equals its name.
TEST(ParseIrcLineProperty, SpansMatchText) {
  std::mt19937_64 rng(7);
  const std::vector<std::string> words{"Kappa", "h\xC3\xA9", "\xF0\x9F\x98\x80", "LUL", "ok", "\xE4\xBD\xA0\xE5\xA5\xBD"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> toks;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) toks.push_back(words[rng() % words.size()]);
    std::string text;
    std::string tag;
    std::size_t cp = 0;
    for (int i = 0; i < n; ++i) {
      if (i) {
        text += ' ';
        ++cp;
      }
      const std::size_t len = utf8::length(toks[i]);
      if (rng() % 2) {
        if (!tag.empty()) tag += '/';
        tag += std::to_string(i) + ":" + std::to_string(cp) + "-" + std::to_string(cp + len - 1);
      }
      text += toks[i];
      cp += len;
    }
    const std::string line = (tag.empty() ? "" : "@emotes=" + tag + " ") + ":u!u@u PRIVMSG #c :" + text;
    const auto m = parse_irc_line(line);
    EXPECT_FALSE(span_violation(m).has_value()) << line;
    for (const auto& s : m.emote_spans) EXPECT_EQ(s.name, toks[std::stoul(s.emote_id)]);
  }
}

// Arbitrary bytes: either a message or MalformedLine, nothing else.
TEST(ParseIrcLineProperty, TotalOverArbitraryBytes) {
  std::mt19937_64 rng(11);
  const std::string seed = "@emotes=25:0-4;tmi-sent-ts=1 :u!u@u PRIVMSG #c :Kappa hi";
  for (int trial = 0; trial < 20000; ++trial) {
    std::string line;
    if (trial % 2) {
      line = seed;
      const int edits = 1 + static_cast<int>(rng() % 6);
      for (int e = 0; e < edits; ++e) line[rng() % line.size()] = static_cast<char>(rng() % 256);
    } else {
      const std::size_t len = rng() % 80;
      for (std::size_t i = 0; i < len; ++i) line.push_back(static_cast<char>(rng() % 256));
    }
    try {
      const auto m = parse_irc_line(line);
      EXPECT_FALSE(span_violation(m).has_value());
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::malformed_line);
    }
  }
}

TEST(ReadLog, ValidFileInOrder) {
  testsupport::TempDir dir;
  const auto path = dir.file("three.jsonl");
  testsupport::write_file(path,
                          "{\"id\":\"1\",\"channel\":\"c\",\"author\":\"a\",\"ts\":1,\"text\":\"one\",\"emotes\":[]}\n"
                          "{\"id\":\"2\",\"channel\":\"c\",\"author\":\"a\",\"ts\":2,\"text\":\"two\",\"emotes\":[]}\n"
                          "{\"id\":\"3\",\"channel\":\"c\",\"author\":\"a\",\"ts\":3,\"text\":\"three\",\"emotes\":[]}\n");
  const auto r = read_log(path);
  ASSERT_EQ(r.messages.size(), 3u);
  EXPECT_EQ(r.messages[0].text, "one");
  EXPECT_EQ(r.messages[2].text, "three");
  EXPECT_EQ(r.error_count, 0u);
}

TEST(ReadLog, CorruptLineIsCounted) {
  testsupport::TempDir dir;
  const auto path = dir.file("five.jsonl");
  std::string content;
  for (int i = 0; i < 5; ++i) {
    if (i == 2) content += "{\"id\":\"x\",\"text\":\n";
    else content += "{\"id\":\"" + std::to_string(i) + "\",\"text\":\"t\",\"emotes\":[]}\n";
  }
  testsupport::write_file(path, content);
  const auto r = read_log(path);
  EXPECT_EQ(r.messages.size(), 4u);
  EXPECT_EQ(r.error_count, 1u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_NE(r.errors[0].find("line 3"), std::string::npos);
}

TEST(ReadLog, EmptyFileAndMissingFile) {
  testsupport::TempDir dir;
  const auto path = dir.file("empty.jsonl");
  testsupport::write_file(path, "");
  EXPECT_TRUE(read_log(path).messages.empty());
  EXPECT_EQ(code_of([&] { read_log(dir.file("nope.jsonl")); }), Errc::file_unreadable);
}

TEST(ReadLog, SpanInvariantViolationIsSkipped) {
  testsupport::TempDir dir;
  const auto path = dir.file("bad_span.jsonl");
  testsupport::write_file(path,
                          "{\"id\":\"1\",\"text\":\"Kappa\",\"emotes\":[{\"name\":\"LUL\",\"id\":\"1\",\"start\":0,"
                          "\"end\":4}]}\n");
  const auto r = read_log(path);
  EXPECT_TRUE(r.messages.empty());
  EXPECT_EQ(r.error_count, 1u);
}

TEST(ReadIrcFile, CountsMalformed) {
  const auto r = read_irc_file(fixture("sample.irc"));
  ASSERT_EQ(r.messages.size(), 3u);
  EXPECT_EQ(r.error_count, 2u);
  EXPECT_EQ(r.messages[0].id, "aaa-1");
  EXPECT_EQ(r.messages[2].text, "pepeD pepeD");
}

TEST(JsonlRoundTrip, ParsedMessagesSurviveWriteAndRead) {
  testsupport::TempDir dir;
  auto msgs = read_irc_file(fixture("sample.irc")).messages;
  msgs[1].label = Label::toxic;
  msgs[0].emote_spans[0].kind = EmoteKind::global;
  const auto path = dir.file("rt.jsonl");
  write_log(path, msgs);
  const auto back = read_log(path);
  EXPECT_EQ(back.error_count, 0u);
  EXPECT_EQ(back.messages, msgs);
}

TEST(Replay, FastRateDeliversAll) {
  std::vector<ChatMessage> msgs(10);
  std::size_t seen = 0;
  const auto st = replay(msgs, 1e9, [&](const ChatMessage&) { ++seen; });
  EXPECT_EQ(st.delivered, 10u);
  EXPECT_EQ(seen, 10u);
  EXPECT_LT(st.duration_s, 0.5);
}

TEST(Replay, PacedRate) {
  std::vector<ChatMessage> msgs(10);
  const auto st = replay(msgs, 10.0, [](const ChatMessage&) {});
  EXPECT_EQ(st.delivered, 10u);
  EXPECT_GE(st.duration_s, 0.8);
  EXPECT_LE(st.duration_s, 1.5);
}

TEST(Replay, EmptyAndFailingSink) {
  EXPECT_EQ(replay({}, 5.0, [](const ChatMessage&) {}).delivered, 0u);
  std::vector<ChatMessage> msgs(5);
  std::size_t calls = 0;
  const auto st = replay(msgs, 1e9, [&](const ChatMessage&) {
    if (++calls == 3) throw std::runtime_error("sink closed");
  });
  EXPECT_EQ(st.delivered, 2u);
  ASSERT_TRUE(st.sink_error.has_value());
  EXPECT_NE(st.sink_error->find("SinkFailure"), std::string::npos);
  EXPECT_EQ(code_of([&] { replay(msgs, 0.0, [](const ChatMessage&) {}); }), Errc::invalid_argument);
}
