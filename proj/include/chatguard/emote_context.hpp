#pragma once

#include <string>
#include <vector>

#include "chatguard/emote_catalog.hpp"
#include "chatguard/emote_space.hpp"
#include "chatguard/message.hpp"
#include "chatguard/utf8.hpp"

namespace chatguard {

// A channel-emote occurrence found in a message, in text order.
struct ChannelEmoteOccurrence {
  std::string name;
  std::size_t start = 0;  // code points, inclusive
  std::size_t end = 0;
};

/// Channel-emote occurrences in `message`. With a catalog, spans are resolved
/// by catalog lookup. Without one, tag spans and whitespace tokens that the
/// space knows and does not flag as global are treated as channel emotes.
inline std::vector<ChannelEmoteOccurrence> channel_emote_occurrences(const ChatMessage& message,
                                                                     const EmoteCatalog* catalog,
                                                                     const EmoteVectorSpace* space) {
  ChatMessage m = catalog ? extract_emotes(message, *catalog) : message;
  if (!catalog && space) {
    for (const auto& tok : utf8::tokenize(m.text)) {
      if (!space->contains(tok.text)) continue;
      const bool overlaps = std::any_of(m.emote_spans.begin(), m.emote_spans.end(), [&](const EmoteSpan& s) {
        return s.start <= tok.last_cp && tok.first_cp <= s.end;
      });
      if (!overlaps) m.emote_spans.push_back({std::string(tok.text), {}, tok.first_cp, tok.last_cp, EmoteKind::unknown});
    }
    std::sort(m.emote_spans.begin(), m.emote_spans.end(),
              [](const EmoteSpan& a, const EmoteSpan& b) { return a.start < b.start; });
  }
  std::vector<ChannelEmoteOccurrence> out;
  for (const auto& s : m.emote_spans) {
    bool is_channel = s.kind == EmoteKind::channel;
    if (s.kind == EmoteKind::unknown && space) is_channel = space->contains(s.name) && !space->is_global(s.name);
    if (is_channel) out.push_back({s.name, s.start, s.end});
  }
  return out;
}

}  // namespace chatguard
