#pragma once

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "chatguard/error.hpp"
#include "chatguard/message.hpp"
#include "chatguard/utf8.hpp"

namespace chatguard {

struct EmoteMeta {
  EmoteKind kind = EmoteKind::global;
  std::optional<std::string> channel;
  std::optional<std::string> description;

  bool operator==(const EmoteMeta&) const = default;
};

/// Global and channel emote dictionary. Names are case-sensitive. When the
/// same name is added twice a channel entry beats a global one; otherwise the
/// later entry wins.
class EmoteCatalog {
 public:
  EmoteCatalog() = default;

  void add(const std::string& name, EmoteMeta meta) {
    if (name.empty()) throw Error(Errc::invalid_argument, "emote name must be non-empty");
    if (meta.kind == EmoteKind::unknown) throw Error(Errc::invalid_argument, "catalog entry needs a kind");
    if (meta.kind == EmoteKind::channel && (!meta.channel || meta.channel->empty())) {
      throw Error(Errc::invalid_argument, "channel emote '" + name + "' has no channel");
    }
    if (meta.description && meta.description->empty()) meta.description.reset();
    auto it = entries_.find(name);
    if (it != entries_.end() && it->second.kind == EmoteKind::channel && meta.kind == EmoteKind::global) {
      return;
    }
    entries_[name] = std::move(meta);
  }

  void merge(const EmoteCatalog& other) {
    for (const auto& [name, meta] : other.entries_) add(name, meta);
  }

  const EmoteMeta* find(std::string_view name) const {
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::string, EmoteMeta, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, EmoteMeta, std::less<>> entries_;
};

/// Catalog file: {"channel": "<name>"|null, "emotes": [{"name","kind","description"?}]}
inline EmoteCatalog catalog_from_json(const json& j) {
  EmoteCatalog cat;
  try {
    std::optional<std::string> file_channel;
    if (j.contains("channel") && j["channel"].is_string()) file_channel = j["channel"].get<std::string>();
    for (const auto& e : j.at("emotes")) {
      EmoteMeta meta;
      auto kind = parse_emote_kind(e.value("kind", std::string(file_channel ? "channel" : "global")));
      if (!kind) throw Error(Errc::corrupt_file, "bad emote kind in catalog");
      meta.kind = *kind;
      if (meta.kind == EmoteKind::channel) {
        meta.channel = e.contains("channel") && e["channel"].is_string() ? e["channel"].get<std::string>()
                                                                         : file_channel;
      }
      if (e.contains("description") && e["description"].is_string()) {
        meta.description = e["description"].get<std::string>();
      }
      cat.add(e.at("name").get<std::string>(), std::move(meta));
    }
  } catch (const json::exception& ex) {
    throw Error(Errc::corrupt_file, std::string("bad catalog: ") + ex.what());
  } catch (const Error& ex) {
    if (ex.code() == Errc::corrupt_file) throw;
    throw Error(Errc::corrupt_file, std::string("bad catalog: ") + ex.what());
  }
  return cat;
}

inline EmoteCatalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, "cannot open catalog: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw Error(Errc::corrupt_file, "catalog " + path + ": " + ex.what());
  }
  return catalog_from_json(j);
}

/// Merges catalog files in order; see EmoteCatalog::add for collision rules.
inline EmoteCatalog load_catalogs(const std::vector<std::string>& paths) {
  std::vector<EmoteCatalog> loaded;
  for (const auto& p : paths) loaded.push_back(load_catalog(p));
  EmoteCatalog merged;
  for (const auto& c : loaded) merged.merge(c);
  return merged;
}

/// Whitespace tokens that exactly match catalog names become spans with the
/// catalog's kind. Existing spans are kept (re-kinded when known); tokens
/// overlapping an existing span are ignored.
inline ChatMessage extract_emotes(const ChatMessage& message, const EmoteCatalog& catalog) {
  ChatMessage out = message;
  for (auto& s : out.emote_spans) {
    if (const auto* meta = catalog.find(s.name)) s.kind = meta->kind;
  }
  std::vector<EmoteSpan> added;
  for (const auto& tok : utf8::tokenize(message.text)) {
    const auto* meta = catalog.find(tok.text);
    if (!meta) continue;
    const bool overlaps = std::any_of(out.emote_spans.begin(), out.emote_spans.end(), [&](const EmoteSpan& s) {
      return s.start <= tok.last_cp && tok.first_cp <= s.end;
    });
    if (overlaps) continue;
    added.push_back({std::string(tok.text), std::string{}, tok.first_cp, tok.last_cp, meta->kind});
  }
  out.emote_spans.insert(out.emote_spans.end(), added.begin(), added.end());
  std::sort(out.emote_spans.begin(), out.emote_spans.end(),
            [](const EmoteSpan& a, const EmoteSpan& b) { return a.start < b.start; });
  return out;
}

struct UsageBucket {
  double global_pct = 0.0;
  double channel_pct = 0.0;
  std::size_t comment_count = 0;
  std::size_t global_occurrences = 0;
  std::size_t channel_occurrences = 0;
};

/// Buckets are emote counts per comment: "0".."5" and ">5".
struct EmoteUsageStats {
  static constexpr std::array<std::string_view, 7> bucket_names{"0", "1", "2", "3", "4", "5", ">5"};
  std::array<UsageBucket, 7> buckets{};
  std::size_t comment_count = 0;
  std::size_t emote_occurrences = 0;
  std::size_t unknown_occurrences = 0;  // tag spans the catalog cannot classify
  double mean_emotes_per_comment = 0.0;
  double channel_share = 0.0;  // channel / (global + channel) over the whole corpus
};

/// Counts per occurrence. Only catalog-resolved emotes (global or channel)
/// enter the buckets and the mean; unresolved spans are tallied separately.
inline EmoteUsageStats usage_stats(const std::vector<ChatMessage>& messages, const EmoteCatalog& catalog) {
  if (messages.empty()) throw Error(Errc::empty_corpus, "usage_stats needs at least one comment");
  EmoteUsageStats st;
  std::size_t total_global = 0, total_channel = 0;
  for (const auto& raw : messages) {
    const ChatMessage m = extract_emotes(raw, catalog);
    std::size_t g = 0, c = 0;
    for (const auto& s : m.emote_spans) {
      if (s.kind == EmoteKind::global) ++g;
      else if (s.kind == EmoteKind::channel) ++c;
      else ++st.unknown_occurrences;
    }
    const std::size_t count = g + c;
    auto& b = st.buckets[std::min<std::size_t>(count, 6)];
    ++b.comment_count;
    b.global_occurrences += g;
    b.channel_occurrences += c;
    total_global += g;
    total_channel += c;
  }
  for (auto& b : st.buckets) {
    const std::size_t n = b.global_occurrences + b.channel_occurrences;
    if (n > 0) {
      b.global_pct = static_cast<double>(b.global_occurrences) / static_cast<double>(n);
      b.channel_pct = static_cast<double>(b.channel_occurrences) / static_cast<double>(n);
    }
  }
  st.comment_count = messages.size();
  st.emote_occurrences = total_global + total_channel;
  st.mean_emotes_per_comment = static_cast<double>(st.emote_occurrences) / static_cast<double>(st.comment_count);
  if (st.emote_occurrences > 0) {
    st.channel_share = static_cast<double>(total_channel) / static_cast<double>(st.emote_occurrences);
  }
  return st;
}

inline json to_json(const EmoteUsageStats& st) {
  json buckets = json::object();
  for (std::size_t i = 0; i < st.buckets.size(); ++i) {
    const auto& b = st.buckets[i];
    buckets[std::string(EmoteUsageStats::bucket_names[i])] = {
        {"global_pct", b.global_pct},
        {"channel_pct", b.channel_pct},
        {"comment_count", b.comment_count},
        {"global_occurrences", b.global_occurrences},
        {"channel_occurrences", b.channel_occurrences}};
  }
  return {{"buckets", buckets},
          {"comment_count", st.comment_count},
          {"emote_occurrences", st.emote_occurrences},
          {"unknown_occurrences", st.unknown_occurrences},
          {"mean_emotes_per_comment", st.mean_emotes_per_comment},
          {"channel_share", st.channel_share},
          {"counting", "per-occurrence"}};
}

inline void write_stats_csv(std::ostream& out, const EmoteUsageStats& st) {
  out << "bucket,comment_count,global_occurrences,channel_occurrences,global_pct,channel_pct\n";
  for (std::size_t i = 0; i < st.buckets.size(); ++i) {
    const auto& b = st.buckets[i];
    out << EmoteUsageStats::bucket_names[i] << ',' << b.comment_count << ',' << b.global_occurrences << ','
        << b.channel_occurrences << ',' << b.global_pct << ',' << b.channel_pct << '\n';
  }
}

}  // namespace chatguard
