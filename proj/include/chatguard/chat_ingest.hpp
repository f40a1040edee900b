#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "chatguard/error.hpp"
#include "chatguard/message.hpp"
#include "chatguard/utf8.hpp"

namespace chatguard {

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

// IRCv3 tag value unescaping: \: -> ';', \s -> ' ', \\ -> '\', \r, \n.
inline std::string unescape_tag_value(std::string_view v) {
  std::string out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != '\\') {
      out.push_back(v[i]);
      continue;
    }
    if (++i >= v.size()) break;
    switch (v[i]) {
      case ':': out.push_back(';'); break;
      case 's': out.push_back(' '); break;
      case 'r': out.push_back('\r'); break;
      case 'n': out.push_back('\n'); break;
      default: out.push_back(v[i]); break;
    }
  }
  return out;
}

}  // namespace detail

using IrcTags = std::map<std::string, std::string, std::less<>>;

inline IrcTags parse_irc_tags(std::string_view block) {
  IrcTags tags;
  if (block.empty()) throw Error(Errc::malformed_line, "empty tag block");
  std::size_t pos = 0;
  while (pos <= block.size()) {
    const std::size_t semi = block.find(';', pos);
    const std::string_view item =
        block.substr(pos, semi == std::string_view::npos ? std::string_view::npos : semi - pos);
    if (!item.empty()) {
      const std::size_t eq = item.find('=');
      const std::string_view key = item.substr(0, eq);
      if (key.empty()) throw Error(Errc::malformed_line, "tag with empty key");
      tags[std::string(key)] =
          eq == std::string_view::npos ? std::string{} : detail::unescape_tag_value(item.substr(eq + 1));
    }
    if (semi == std::string_view::npos) break;
    pos = semi + 1;
  }
  return tags;
}

/// Decodes a Twitch `emotes` tag value (`<id>:<s>-<e>[,<s>-<e>]*[/<id>:...]`)
/// against `text`. Offsets are code points; spans come back sorted by start.
inline std::vector<EmoteSpan> decode_emotes_tag(std::string_view value, std::string_view text) {
  std::vector<EmoteSpan> spans;
  if (value.empty()) return spans;
  auto offs = utf8::code_point_offsets(text);
  if (!offs) throw Error(Errc::malformed_line, "text is not valid UTF-8");
  const std::size_t n = offs->size() - 1;

  std::size_t pos = 0;
  while (pos <= value.size()) {
    const std::size_t slash = value.find('/', pos);
    const std::string_view group =
        value.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
    const std::size_t colon = group.find(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw Error(Errc::malformed_line, "bad emotes tag group '" + std::string(group) + "'");
    }
    const std::string id(group.substr(0, colon));
    std::string_view ranges = group.substr(colon + 1);
    std::size_t rpos = 0;
    while (rpos <= ranges.size()) {
      const std::size_t comma = ranges.find(',', rpos);
      const std::string_view range =
          ranges.substr(rpos, comma == std::string_view::npos ? std::string_view::npos : comma - rpos);
      const std::size_t dash = range.find('-');
      std::size_t s = 0, e = 0;
      if (dash == std::string_view::npos || !detail::parse_int(range.substr(0, dash), s) ||
          !detail::parse_int(range.substr(dash + 1), e)) {
        throw Error(Errc::malformed_line, "bad emote range '" + std::string(range) + "'");
      }
      if (s > e || e >= n) {
        throw Error(Errc::malformed_line, "emote span " + std::string(range) + " exceeds text of " +
                                              std::to_string(n) + " code points");
      }
      spans.push_back({std::string(utf8::slice(text, *offs, s, e)), id, s, e, EmoteKind::unknown});
      if (comma == std::string_view::npos) break;
      rpos = comma + 1;
    }
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  std::sort(spans.begin(), spans.end(), [](const EmoteSpan& a, const EmoteSpan& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].start <= spans[i - 1].end) throw Error(Errc::malformed_line, "overlapping emote spans");
  }
  return spans;
}

/// Parses a single IRC line of the form
/// `[@tags ]:nick!user@host PRIVMSG #channel :text`.
/// Throws Error(malformed_line) for anything else; never crashes on arbitrary bytes.
inline ChatMessage parse_irc_line(std::string_view line) {
  auto fail = [](const std::string& why) -> void { throw Error(Errc::malformed_line, why); };
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);

  IrcTags tags;
  if (!line.empty() && line.front() == '@') {
    const std::size_t sp = line.find(' ');
    if (sp == std::string_view::npos) fail("tag block without command");
    tags = parse_irc_tags(line.substr(1, sp - 1));
    line.remove_prefix(sp + 1);
  }
  while (!line.empty() && line.front() == ' ') line.remove_prefix(1);

  std::string author;
  if (!line.empty() && line.front() == ':') {
    const std::size_t sp = line.find(' ');
    if (sp == std::string_view::npos) fail("prefix without command");
    const std::string_view prefix = line.substr(1, sp - 1);
    author = std::string(prefix.substr(0, prefix.find('!')));
    line.remove_prefix(sp + 1);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
  }

  const std::size_t cmd_end = line.find(' ');
  if (line.substr(0, cmd_end) != "PRIVMSG") fail("not a PRIVMSG");
  if (cmd_end == std::string_view::npos) fail("PRIVMSG without parameters");
  line.remove_prefix(cmd_end + 1);
  while (!line.empty() && line.front() == ' ') line.remove_prefix(1);

  const std::size_t trail = line.find(" :");
  if (trail == std::string_view::npos) fail("PRIVMSG without trailing text");
  std::string_view target = line.substr(0, trail);
  std::string_view text = line.substr(trail + 2);
  if (target.empty() || target.front() != '#' || target.size() < 2) fail("PRIVMSG target is not a channel");
  target.remove_prefix(1);

  // /me messages arrive wrapped as CTCP ACTION; Twitch emote offsets refer to the inner text.
  constexpr std::string_view action = "\x01" "ACTION ";
  if (text.starts_with(action) && text.size() > action.size() && text.back() == '\x01') {
    text = text.substr(action.size(), text.size() - action.size() - 1);
  }
  if (!utf8::is_valid(text)) fail("text is not valid UTF-8");
  if (utf8::trim(text).empty()) fail("empty text");

  ChatMessage m;
  m.channel = std::string(target);
  m.author = std::move(author);
  m.text = std::string(text);
  if (auto it = tags.find("emotes"); it != tags.end()) {
    m.emote_spans = decode_emotes_tag(it->second, m.text);
  }
  if (auto it = tags.find("tmi-sent-ts"); it != tags.end() && !it->second.empty()) {
    if (!detail::parse_int(std::string_view(it->second), m.timestamp_ms)) fail("bad tmi-sent-ts");
  }
  if (auto it = tags.find("id"); it != tags.end() && !it->second.empty()) {
    m.id = it->second;
  } else {
    std::ostringstream os;
    os << m.channel << '-' << std::hex << detail::fnv1a64(line);
    m.id = os.str();
  }
  if (m.author.empty()) {
    if (auto it = tags.find("display-name"); it != tags.end()) m.author = it->second;
  }
  return m;
}

struct LogReadResult {
  std::vector<ChatMessage> messages;
  std::size_t error_count = 0;
  std::vector<std::string> errors;  // "line N: reason"
};

/// Reads a JSONL chat log. Corrupt records are skipped and counted.
inline LogReadResult read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, "cannot open log file: " + path);
  LogReadResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (utf8::trim(line).empty()) continue;
    try {
      result.messages.push_back(message_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      ++result.error_count;
      result.errors.push_back("line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const Error& ex) {
      ++result.error_count;
      result.errors.push_back("line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (in.bad()) throw Error(Errc::file_unreadable, "read error on " + path);
  return result;
}

/// Parses raw IRC lines (one per line); non-PRIVMSG and malformed lines are counted.
inline LogReadResult read_irc_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_unreadable, "cannot open IRC file: " + path);
  LogReadResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (utf8::trim(line).empty()) continue;
    try {
      result.messages.push_back(parse_irc_line(line));
    } catch (const Error& ex) {
      ++result.error_count;
      result.errors.push_back("line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return result;
}

inline void write_log(std::ostream& out, const std::vector<ChatMessage>& messages) {
  for (const auto& m : messages) out << to_json(m).dump() << '\n';
}

inline void write_log(const std::string& path, const std::vector<ChatMessage>& messages) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::file_unreadable, "cannot write log file: " + path);
  write_log(out, messages);
}

struct ReplayStats {
  std::size_t delivered = 0;
  double duration_s = 0.0;
  std::optional<std::string> sink_error;  // set when the sink threw and replay stopped
};

using MessageSink = std::function<void(const ChatMessage&)>;

/// Delivers messages to `sink` paced at `rate` messages per second: message i
/// is released at start + i/rate. A throwing sink stops the replay; the
/// returned stats then carry the partial count and the sink's error.
inline ReplayStats replay(const std::vector<ChatMessage>& messages, double rate, const MessageSink& sink) {
  if (!(rate > 0.0)) throw Error(Errc::invalid_argument, "replay rate must be positive");
  using clock = std::chrono::steady_clock;
  ReplayStats stats;
  const auto start = clock::now();
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto due = start + std::chrono::duration_cast<clock::duration>(
                                 std::chrono::duration<double>(static_cast<double>(i) / rate));
    if (due > clock::now()) std::this_thread::sleep_until(due);
    try {
      sink(messages[i]);
    } catch (const std::exception& ex) {
      stats.sink_error = std::string(errc_name(Errc::sink_failure)) + ": " + ex.what();
      break;
    }
    ++stats.delivered;
  }
  stats.duration_s = std::chrono::duration<double>(clock::now() - start).count();
  return stats;
}

}  // namespace chatguard
