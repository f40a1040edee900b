#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "chatguard/error.hpp"
#include "chatguard/utf8.hpp"

namespace chatguard {

using json = nlohmann::json;

enum class Label { non_toxic, toxic };

enum class EmoteKind { global, channel, unknown };

constexpr std::string_view to_string(Label l) { return l == Label::toxic ? "toxic" : "non-toxic"; }

constexpr std::string_view to_string(EmoteKind k) {
  switch (k) {
    case EmoteKind::global: return "global";
    case EmoteKind::channel: return "channel";
    case EmoteKind::unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Label> parse_label(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "toxic" || lower == "1" || lower == "yes" || lower == "true") return Label::toxic;
  if (lower == "non-toxic" || lower == "non_toxic" || lower == "nontoxic" || lower == "0" ||
      lower == "no" || lower == "false") {
    return Label::non_toxic;
  }
  return std::nullopt;
}

inline std::optional<EmoteKind> parse_emote_kind(std::string_view s) {
  if (s == "global" || s == "GLOBAL") return EmoteKind::global;
  if (s == "channel" || s == "CHANNEL") return EmoteKind::channel;
  if (s == "unknown" || s == "UNKNOWN") return EmoteKind::unknown;
  return std::nullopt;
}

/// An emote occurrence inside a message. Offsets are code-point indices,
/// `end` inclusive.
struct EmoteSpan {
  std::string name;
  std::string emote_id;
  std::size_t start = 0;
  std::size_t end = 0;
  EmoteKind kind = EmoteKind::unknown;

  bool operator==(const EmoteSpan&) const = default;
};

struct ChatMessage {
  std::string id;
  std::string channel;
  std::string author;
  std::int64_t timestamp_ms = 0;
  std::string text;
  std::vector<EmoteSpan> emote_spans;
  std::optional<Label> label;  // present in annotated logs only

  bool operator==(const ChatMessage&) const = default;
};

// Checks the span invariants: sorted, non-overlapping, in bounds, and each
// span's substring equals its name. Returns an explanation on failure.
inline std::optional<std::string> span_violation(const ChatMessage& m) {
  auto offs = utf8::code_point_offsets(m.text);
  if (!offs) return "text is not valid UTF-8";
  const std::size_t n = offs->size() - 1;
  std::size_t next_free = 0;
  for (std::size_t i = 0; i < m.emote_spans.size(); ++i) {
    const auto& s = m.emote_spans[i];
    if (s.start > s.end) return "span start after end";
    if (s.end >= n) return "span " + std::to_string(s.start) + "-" + std::to_string(s.end) +
                           " exceeds text length " + std::to_string(n);
    if (i > 0 && s.start < next_free) return "spans overlap or are unsorted";
    if (utf8::slice(m.text, *offs, s.start, s.end) != s.name) {
      return "span substring does not match emote name '" + s.name + "'";
    }
    next_free = s.end + 1;
  }
  return std::nullopt;
}

inline json to_json(const ChatMessage& m) {
  json emotes = json::array();
  for (const auto& s : m.emote_spans) {
    json e{{"name", s.name}, {"id", s.emote_id}, {"start", s.start}, {"end", s.end}};
    if (s.kind != EmoteKind::unknown) e["kind"] = std::string(to_string(s.kind));
    emotes.push_back(std::move(e));
  }
  json j{{"id", m.id},     {"channel", m.channel}, {"author", m.author},
         {"ts", m.timestamp_ms}, {"text", m.text},       {"emotes", std::move(emotes)}};
  if (m.label) j["label"] = std::string(to_string(*m.label));
  return j;
}

/// Parses one JSONL log record. Throws Error(malformed_line) on any schema or
/// invariant violation.
inline ChatMessage message_from_json(const json& j) {
  auto fail = [](const std::string& why) { throw Error(Errc::malformed_line, why); };
  if (!j.is_object()) fail("record is not a JSON object");
  ChatMessage m;
  try {
    m.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    m.channel = j.value("channel", std::string{});
    m.author = j.value("author", std::string{});
    m.timestamp_ms = j.value("ts", std::int64_t{0});
    m.text = j.at("text").get<std::string>();
    if (j.contains("emotes") && !j["emotes"].is_null()) {
      for (const auto& e : j.at("emotes")) {
        EmoteSpan s;
        s.name = e.at("name").get<std::string>();
        s.emote_id = e.contains("id") && e["id"].is_string() ? e["id"].get<std::string>()
                     : e.contains("id")                       ? e["id"].dump()
                                                              : std::string{};
        s.start = e.at("start").get<std::size_t>();
        s.end = e.at("end").get<std::size_t>();
        if (e.contains("kind")) {
          auto k = parse_emote_kind(e["kind"].get<std::string>());
          if (!k) fail("unknown emote kind");
          s.kind = *k;
        }
        m.emote_spans.push_back(std::move(s));
      }
    }
    if (j.contains("label") && !j["label"].is_null()) {
      const auto& lj = j["label"];
      auto l = lj.is_string() ? parse_label(lj.get<std::string>())
               : lj.is_boolean() ? std::optional<Label>(lj.get<bool>() ? Label::toxic : Label::non_toxic)
               : lj.is_number_integer() ? parse_label(std::to_string(lj.get<int>()))
                                        : std::nullopt;
      if (!l) fail("unrecognized label");
      m.label = *l;
    }
  } catch (const json::exception& ex) {
    fail(std::string("bad record: ") + ex.what());
  }
  if (utf8::trim(m.text).empty()) fail("empty text");
  if (auto why = span_violation(m)) fail(*why);
  return m;
}

}  // namespace chatguard
