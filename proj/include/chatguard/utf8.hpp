#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chatguard::utf8 {

// Byte offset of every code point in `s`, plus a trailing entry equal to
// s.size(). Returns nullopt on invalid UTF-8 (overlongs, surrogates, truncation).
inline std::optional<std::vector<std::size_t>> code_point_offsets(std::string_view s) {
  std::vector<std::size_t> offsets;
  offsets.reserve(s.size() + 1);
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      return std::nullopt;
    }
    if (i + len > s.size()) return std::nullopt;
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr std::uint32_t min_for_len[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_for_len[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return std::nullopt;
    }
    offsets.push_back(i);
    i += len;
  }
  offsets.push_back(s.size());
  return offsets;
}

inline bool is_valid(std::string_view s) { return code_point_offsets(s).has_value(); }

inline std::size_t length(std::string_view s) {
  auto offs = code_point_offsets(s);
  return offs ? offs->size() - 1 : 0;
}

// Code points [first, last] inclusive, using a precomputed offset table.
inline std::string_view slice(std::string_view s, const std::vector<std::size_t>& offsets,
                              std::size_t first, std::size_t last) {
  return s.substr(offsets[first], offsets[last + 1] - offsets[first]);
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

struct Token {
  std::string_view text;
  std::size_t first_cp = 0;  // inclusive
  std::size_t last_cp = 0;   // inclusive
};

// Whitespace-delimited tokens with code-point positions. Input must be valid UTF-8.
inline std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  auto offs = code_point_offsets(s);
  if (!offs) return out;
  const auto& o = *offs;
  const std::size_t n = o.size() - 1;
  std::size_t cp = 0;
  while (cp < n) {
    while (cp < n && is_space(s[o[cp]])) ++cp;
    if (cp >= n) break;
    const std::size_t start = cp;
    while (cp < n && !is_space(s[o[cp]])) ++cp;
    out.push_back({s.substr(o[start], o[cp] - o[start]), start, cp - 1});
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace chatguard::utf8
