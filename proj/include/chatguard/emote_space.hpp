#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chatguard/emote_catalog.hpp"
#include "chatguard/error.hpp"
#include "chatguard/message.hpp"

namespace chatguard {

/// Dense emote vectors (word2vec text format) plus the set of names that are
/// global emotes. Vectors are stored as float, similarities computed in double.
class EmoteVectorSpace {
 public:
  explicit EmoteVectorSpace(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return names_.size(); }

  void add(const std::string& name, std::span<const double> vec) {
    if (vec.size() != dim_) {
      throw Error(Errc::dimension_mismatch, "vector for '" + name + "' has " + std::to_string(vec.size()) +
                                                " values, expected " + std::to_string(dim_));
    }
    for (double v : vec) {
      if (!std::isfinite(v)) throw Error(Errc::non_finite_value, "non-finite value in vector for '" + name + "'");
    }
    auto [it, inserted] = index_.emplace(name, names_.size());
    if (!inserted) throw Error(Errc::bad_header, "duplicate emote '" + name + "' in vector space");
    names_.push_back(name);
    data_.insert(data_.end(), vec.begin(), vec.end());
    double ss = 0.0;
    for (double v : vec) ss += static_cast<double>(static_cast<float>(v)) * static_cast<float>(v);
    norms_.push_back(std::sqrt(ss));
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  std::span<const float> vector(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(Errc::unknown_emote, "emote '" + std::string(name) + "' not in space");
    return row(it->second);
  }

  /// Names not present in the space are ignored; returns how many were.
  std::size_t set_global_names(const std::vector<std::string>& names) {
    std::size_t missing = 0;
    global_names_.clear();
    for (const auto& n : names) {
      if (contains(n)) global_names_.insert(n);
      else ++missing;
    }
    return missing;
  }

  bool is_global(std::string_view name) const { return global_names_.find(name) != global_names_.end(); }
  const std::set<std::string, std::less<>>& global_names() const { return global_names_; }
  const std::vector<std::string>& names() const { return names_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  double norm(std::size_t i) const { return norms_[i]; }
  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(Errc::unknown_emote, "emote '" + std::string(name) + "' not in space");
    return it->second;
  }

 private:
  std::size_t dim_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::set<std::string, std::less<>> global_names_;
};

/// Reads `<count> <dim>` followed by `<name> <f1> ... <f_dim>` rows.
inline EmoteVectorSpace load_vectors(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::bad_header, "empty vector file");
  std::istringstream hs(line);
  long long count = -1, dim = -1;
  std::string extra;
  if (!(hs >> count >> dim) || (hs >> extra) || count < 0 || dim <= 0) {
    throw Error(Errc::bad_header, "bad header line '" + line + "'");
  }
  EmoteVectorSpace space(static_cast<std::size_t>(dim));
  std::vector<double> vec;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (utf8::trim(line).empty()) continue;
    std::istringstream rs(line);
    std::string name;
    rs >> name;
    vec.clear();
    std::string tok;
    while (rs >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw Error(Errc::bad_header, "row " + std::to_string(lineno) + " ('" + name + "'): bad number '" + tok + "'");
      }
      if (!std::isfinite(v)) {
        throw Error(Errc::non_finite_value, "row " + std::to_string(lineno) + " ('" + name + "') has a non-finite value");
      }
      vec.push_back(v);
    }
    if (vec.size() != static_cast<std::size_t>(dim)) {
      throw Error(Errc::dimension_mismatch, "row " + std::to_string(lineno) + " ('" + name + "') has " +
                                                std::to_string(vec.size()) + " values, expected " + std::to_string(dim));
    }
    space.add(name, vec);
  }
  if (space.size() != static_cast<std::size_t>(count)) {
    throw Error(Errc::bad_header, "header declares " + std::to_string(count) + " vectors, file has " +
                                      std::to_string(space.size()));
  }
  return space;
}

inline EmoteVectorSpace load_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, "cannot open vector file: " + path);
  return load_vectors(in);
}

/// Companion file naming the global emotes: either a JSON array of names or
/// {"global": [...]}.
inline std::vector<std::string> load_global_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, "cannot open global-emote list: " + path);
  try {
    const json j = json::parse(in);
    const json& arr = j.is_array() ? j : j.at("global");
    return arr.get<std::vector<std::string>>();
  } catch (const json::exception& ex) {
    throw Error(Errc::corrupt_file, "global-emote list " + path + ": " + ex.what());
  }
}

template <typename A, typename B>
double cosine(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) throw Error(Errc::length_mismatch, "cosine of vectors with different lengths");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = static_cast<double>(u[i]);
    const double b = static_cast<double>(v[i]);
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) throw Error(Errc::zero_vector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  return cosine(std::span<const double>(u), std::span<const double>(v));
}

struct GlobalMapping {
  std::string channel_emote;
  std::vector<std::pair<std::string, double>> neighbors;  // similarity desc, then name asc
};

/// The k global emotes most cosine-similar to `channel_emote`, excluding the
/// query itself. Zero-norm global vectors are never returned.
inline GlobalMapping top_k_global(std::string_view channel_emote, const EmoteVectorSpace& space, std::size_t k = 3) {
  if (k == 0) throw Error(Errc::invalid_argument, "k must be at least 1");
  const std::size_t qi = space.index_of(channel_emote);
  const auto q = space.row(qi);
  const double qn = space.norm(qi);
  if (qn == 0.0) throw Error(Errc::zero_vector, "emote '" + std::string(channel_emote) + "' has a zero vector");

  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(space.global_names().size());
  for (const auto& name : space.global_names()) {
    if (name == channel_emote) continue;
    const std::size_t gi = space.index_of(name);
    const double gn = space.norm(gi);
    if (gn == 0.0) continue;
    const auto g = space.row(gi);
    double dot = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) dot += static_cast<double>(q[d]) * static_cast<double>(g[d]);
    scored.emplace_back(name, std::clamp(dot / (qn * gn), -1.0, 1.0));
  }
  if (scored.empty()) throw Error(Errc::empty_global_set, "no global emotes to map onto");
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
  scored.resize(take);
  return {std::string(channel_emote), std::move(scored)};
}

inline std::optional<std::string> describe(std::string_view emote, const EmoteCatalog& catalog) {
  if (const auto* meta = catalog.find(emote)) return meta->description;
  return std::nullopt;
}

inline json to_json(const GlobalMapping& m) {
  json n = json::array();
  for (const auto& [name, sim] : m.neighbors) n.push_back({{"emote", name}, {"similarity", sim}});
  return {{"channel_emote", m.channel_emote}, {"neighbors", n}};
}

}  // namespace chatguard
