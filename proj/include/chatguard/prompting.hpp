#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "chatguard/emote_catalog.hpp"
#include "chatguard/emote_context.hpp"
#include "chatguard/emote_space.hpp"
#include "chatguard/error.hpp"
#include "chatguard/http.hpp"
#include "chatguard/message.hpp"

namespace chatguard {

enum class PromptTemplate { cot, cot_ed, cot_egm, emote_probe };

constexpr std::string_view to_string(PromptTemplate t) {
  switch (t) {
    case PromptTemplate::cot: return "COT";
    case PromptTemplate::cot_ed: return "COT_ED";
    case PromptTemplate::cot_egm: return "COT_EGM";
    case PromptTemplate::emote_probe: return "EMOTE_PROBE";
  }
  return "COT";
}

struct Sampling {
  double temperature = 0.5;
  double top_p = 0.9;

  bool operator==(const Sampling&) const = default;
};

struct Prompt {
  PromptTemplate template_id = PromptTemplate::cot;
  std::string rendered_text;
  std::string message_id;
  Sampling sampling;
  std::vector<std::string> warnings;
};

namespace prompt_text {

inline constexpr std::string_view cot_instruction =
    "If you were a moderator on the Twitch streaming platform, imagine encountering a comment with the "
    "following content. Your objective is to flag the comment as <toxic> or <non-toxic> based on the "
    "following toxicity definitions: <obscene, threat, insult, identity attack, sexually explicit>. "
    "Consider this reasoning step by step.";

inline constexpr std::string_view json_contract =
    "Return a JSON object with four fields: \"Is it toxic,\" which is either \"yes\" or \"no\" depending on "
    "whether you would remove this comment from the stream; which toxicity category it falls into; and "
    "\"explanation,\" which provides a reason for your decision; and whether your explanation included any "
    "emotes present in the message and whether the emote conveyed toxicity.";

inline constexpr std::string_view reasoning_close = "Perform step-by-step reasoning.";

inline std::string ed_clause(std::string_view emote, std::string_view description) {
  return "Consider that " + std::string(emote) + " in this comment is described as " + std::string(description) + ".";
}

inline std::string egm_clause(std::string_view emote, const std::vector<std::string>& globals) {
  std::string list;
  for (std::size_t i = 0; i < globals.size(); ++i) {
    if (i) list += ',';
    list += globals[i];
  }
  return "Consider that " + std::string(emote) + " in this comment is closest to Global Emotes:(" + list + ").";
}

inline std::string probe_question(std::string_view emote) {
  return "Explain the meaning of the Twitch emote \"" + std::string(emote) +
         "\". If you do not know this emote, say so.";
}

}  // namespace prompt_text

namespace detail {

// Layout: instruction, comment, emote clauses (if any) with the closing
// reasoning line, then the JSON output contract last.
inline std::string render_cot(std::string_view text, const std::vector<std::string>& clauses) {
  std::string out;
  out += prompt_text::cot_instruction;
  out += "\nComment: \"";
  out += text;
  out += "\"\n";
  if (!clauses.empty()) {
    for (const auto& c : clauses) {
      out += c;
      out += '\n';
    }
    out += prompt_text::reasoning_close;
    out += '\n';
  }
  out += prompt_text::json_contract;
  return out;
}

inline void require_text(const ChatMessage& m) {
  if (utf8::trim(m.text).empty()) throw Error(Errc::prompt_build_error, "cannot build a prompt for an empty comment");
}

}  // namespace detail

/// Zero-shot chain-of-thought prompt; emote context is ignored.
inline Prompt build_cot_prompt(const ChatMessage& message, Sampling sampling = {}) {
  detail::require_text(message);
  return {PromptTemplate::cot, detail::render_cot(message.text, {}), message.id, sampling, {}};
}

/// CoT prompt plus one description clause per described channel emote,
/// deduplicated by name in first-occurrence order.
inline Prompt build_ed_prompt(const ChatMessage& message, const EmoteCatalog& catalog, Sampling sampling = {}) {
  detail::require_text(message);
  std::vector<std::string> clauses;
  std::set<std::string, std::less<>> seen;
  for (const auto& occ : channel_emote_occurrences(message, &catalog, nullptr)) {
    if (!seen.insert(occ.name).second) continue;
    if (auto desc = describe(occ.name, catalog)) clauses.push_back(prompt_text::ed_clause(occ.name, *desc));
  }
  return {PromptTemplate::cot_ed, detail::render_cot(message.text, clauses), message.id, sampling, {}};
}

/// CoT prompt plus one global-mapping clause per channel emote the space can map.
inline Prompt build_egm_prompt(const ChatMessage& message, const EmoteVectorSpace& space, std::size_t k = 3,
                               Sampling sampling = {}) {
  detail::require_text(message);
  Prompt p{PromptTemplate::cot_egm, {}, message.id, sampling, {}};
  std::vector<std::string> clauses;
  std::set<std::string, std::less<>> seen;
  for (const auto& occ : channel_emote_occurrences(message, nullptr, &space)) {
    if (!seen.insert(occ.name).second) continue;
    if (!space.contains(occ.name)) {
      p.warnings.push_back("channel emote '" + occ.name + "' not in vector space; no mapping");
      continue;
    }
    try {
      const auto mapping = top_k_global(occ.name, space, k);
      std::vector<std::string> globals;
      for (const auto& [g, sim] : mapping.neighbors) globals.push_back(g);
      clauses.push_back(prompt_text::egm_clause(occ.name, globals));
    } catch (const Error& ex) {
      p.warnings.push_back("channel emote '" + occ.name + "': " + ex.what());
    }
  }
  p.rendered_text = detail::render_cot(message.text, clauses);
  return p;
}

/// Same as build_egm_prompt but resolves channel emotes through a catalog first.
inline Prompt build_egm_prompt(const ChatMessage& message, const EmoteCatalog& catalog, const EmoteVectorSpace& space,
                               std::size_t k = 3, Sampling sampling = {}) {
  return build_egm_prompt(extract_emotes(message, catalog), space, k, sampling);
}

// ---------------------------------------------------------------------------
// Verdicts

enum class ToxicityCategory { obscene, threat, insult, identity_attack, sexually_explicit };

constexpr std::string_view to_string(ToxicityCategory c) {
  switch (c) {
    case ToxicityCategory::obscene: return "obscene";
    case ToxicityCategory::threat: return "threat";
    case ToxicityCategory::insult: return "insult";
    case ToxicityCategory::identity_attack: return "identity_attack";
    case ToxicityCategory::sexually_explicit: return "sexually_explicit";
  }
  return "obscene";
}

inline std::optional<ToxicityCategory> parse_category(std::string_view s) {
  std::string norm;
  for (char c : s) {
    const auto uc = static_cast<unsigned char>(c);
    if (c == '_' || c == '-' || std::isspace(uc)) {
      if (!norm.empty() && norm.back() != ' ') norm.push_back(' ');
    } else if (std::isalpha(uc)) {
      norm.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  while (!norm.empty() && norm.back() == ' ') norm.pop_back();
  if (norm == "obscene" || norm == "obscenity") return ToxicityCategory::obscene;
  if (norm == "threat" || norm == "threats" || norm == "threatening") return ToxicityCategory::threat;
  if (norm == "insult" || norm == "insults" || norm == "insulting") return ToxicityCategory::insult;
  if (norm == "identity attack" || norm == "identity hate") return ToxicityCategory::identity_attack;
  if (norm == "sexually explicit" || norm == "sexual") return ToxicityCategory::sexually_explicit;
  return std::nullopt;
}

struct Verdict {
  bool toxic = false;
  std::set<ToxicityCategory> categories;
  std::string explanation;
  bool emote_considered = false;
  std::string raw;
  std::vector<std::string> warnings;

  bool same_decision(const Verdict& o) const {
    return toxic == o.toxic && categories == o.categories && explanation == o.explanation &&
           emote_considered == o.emote_considered;
  }
};

namespace detail {

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Key normalization for model output: lowercase, punctuation and separators dropped.
inline std::string key_norm(std::string_view k) {
  std::string out;
  for (char c : k) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

inline std::optional<bool> yes_no(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (!v.is_string()) return std::nullopt;
  std::string s = lower_ascii(utf8::trim(v.get<std::string>()));
  while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.pop_back();
  if (s == "yes" || s == "true" || s == "toxic") return true;
  if (s == "no" || s == "false" || s == "non-toxic" || s == "nontoxic") return false;
  return std::nullopt;
}

// Candidate JSON objects in order of their opening brace; braces inside
// string literals are respected.
inline std::optional<json> first_json_object(std::string_view raw) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    int depth = 0;
    bool in_str = false, esc = false;
    for (std::size_t i = open; i < raw.size(); ++i) {
      const char c = raw[i];
      if (in_str) {
        if (esc) esc = false;
        else if (c == '\\') esc = true;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') in_str = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto parsed = json::parse(raw.substr(open, i - open + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
        break;
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Extracts the first JSON object in a model response. Throws
/// Error(unparseable_verdict) when no object or no toxic field is found;
/// callers treat that as an abstention.
inline Verdict parse_verdict(std::string_view raw) {
  auto obj = detail::first_json_object(raw);
  if (!obj) throw Error(Errc::unparseable_verdict, "no JSON object in model output");
  Verdict v;
  v.raw = std::string(raw);
  std::optional<bool> toxic;
  for (const auto& [key, value] : obj->items()) {
    const std::string k = detail::key_norm(key);
    if (k == "isittoxic" || k == "istoxic" || k == "toxic") {
      toxic = detail::yes_no(value);
    } else if (k == "category" || k == "categories" || k == "toxicitycategory" || k == "toxicitycategories") {
      std::vector<std::string> items;
      if (value.is_array()) {
        for (const auto& e : value) if (e.is_string()) items.push_back(e.get<std::string>());
      } else if (value.is_string()) {
        const std::string s = value.get<std::string>();
        std::size_t pos = 0;
        while (pos <= s.size()) {
          const std::size_t sep = s.find_first_of(",;/", pos);
          items.push_back(s.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos));
          if (sep == std::string::npos) break;
          pos = sep + 1;
        }
      }
      for (const auto& item : items) {
        const std::string t = detail::lower_ascii(utf8::trim(item));
        if (t.empty() || t == "none" || t == "n/a" || t == "null" || t == "non-toxic") continue;
        if (auto c = parse_category(t)) v.categories.insert(*c);
        else v.warnings.push_back("dropped unrecognized category '" + t + "'");
      }
    } else if (k == "explanation" || k == "reason") {
      v.explanation = value.is_string() ? value.get<std::string>() : value.dump();
    } else if (k.rfind("emote", 0) == 0) {
      v.emote_considered = detail::yes_no(value).value_or(false);
    }
  }
  if (!toxic) throw Error(Errc::unparseable_verdict, "model output has no usable 'Is it toxic' field");
  v.toxic = *toxic;
  if (!v.toxic) v.categories.clear();
  return v;
}

/// Canonical JSON rendering of a verdict; parse_verdict(serialize_verdict(v))
/// reproduces v.
inline std::string serialize_verdict(const Verdict& v) {
  json cats = json::array();
  for (auto c : v.categories) cats.push_back(std::string(to_string(c)));
  json j = json::object();
  j["Is it toxic"] = v.toxic ? "yes" : "no";
  j["category"] = cats;
  j["explanation"] = v.explanation;
  j["emote"] = v.emote_considered ? "yes" : "no";
  return j.dump();
}

// ---------------------------------------------------------------------------
// Chat completion clients

/// Text-in/text-out completion backend. Implementations must be thread-safe.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::string& prompt, const Sampling& sampling) = 0;
};

struct ChatClientConfig {
  std::string url;    // full endpoint URL, e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff{500};  // doubled after every failed attempt
  std::size_t max_in_flight = 4;

  /// Environment overrides: CHATGUARD_CHAT_URL, CHATGUARD_CHAT_MODEL, CHATGUARD_CHAT_API_KEY.
  static ChatClientConfig from_env() { return from_env(ChatClientConfig()); }
  static ChatClientConfig from_env(ChatClientConfig base) {
    if (const char* v = std::getenv("CHATGUARD_CHAT_URL")) base.url = v;
    if (const char* v = std::getenv("CHATGUARD_CHAT_MODEL")) base.model = v;
    if (const char* v = std::getenv("CHATGUARD_CHAT_API_KEY")) base.api_key = v;
    return base;
  }
};

/// Chat endpoint contract: POST {model, messages, temperature, top_p}.
/// Accepts OpenAI-style `choices[0].message.content` or a plain `text` field.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(ChatClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.url.empty()) throw Error(Errc::config_error, "chat endpoint URL is not configured");
  }

  std::string complete(const std::string& prompt, const Sampling& sampling) override {
    json body{{"model", cfg_.model},
              {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
              {"temperature", sampling.temperature},
              {"top_p", sampling.top_p}};
    const json res = http::post_json(cfg_.url, body, {cfg_.timeout, cfg_.api_key}, Errc::client_error);
    try {
      if (res.contains("choices")) return res.at("choices").at(0).at("message").at("content").get<std::string>();
      if (res.contains("text")) return res.at("text").get<std::string>();
      if (res.contains("response")) return res.at("response").get<std::string>();
    } catch (const json::exception& ex) {
      throw Error(Errc::client_error, std::string("unexpected chat response shape: ") + ex.what());
    }
    throw Error(Errc::client_error, "chat response has no text");
  }

 private:
  ChatClientConfig cfg_;
};

/// Retries with exponential backoff and caps concurrent in-flight requests.
class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatBackend> backend, ChatClientConfig cfg)
      : backend_(std::move(backend)), cfg_(std::move(cfg)) {}

  std::string complete(const std::string& prompt, const Sampling& sampling = {}) {
    auto delay = cfg_.backoff;
    std::string last_error = "no attempts made";
    for (int attempt = 1; attempt <= std::max(1, cfg_.max_attempts); ++attempt) {
      try {
        return backend_->complete(prompt, sampling);
      } catch (const std::exception& ex) {
        last_error = ex.what();
      }
      if (attempt < cfg_.max_attempts) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
    throw Error(Errc::client_error, "chat request failed after " + std::to_string(cfg_.max_attempts) +
                                        " attempts: " + last_error);
  }

  struct Outcome {
    std::optional<std::string> text;
    std::string error;
  };

  /// Completes all prompts with at most max_in_flight concurrent requests.
  std::vector<Outcome> complete_all(const std::vector<Prompt>& prompts) {
    std::vector<Outcome> out(prompts.size());
    std::size_t next = 0;
    std::mutex mu;
    auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= prompts.size()) return;
          i = next++;
        }
        try {
          out[i].text = complete(prompts[i].rendered_text, prompts[i].sampling);
        } catch (const std::exception& ex) {
          out[i].error = ex.what();
        }
      }
    };
    const std::size_t n_workers = std::min(std::max<std::size_t>(1, cfg_.max_in_flight), prompts.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
  }

 private:
  std::shared_ptr<ChatBackend> backend_;
  ChatClientConfig cfg_;
};

// ---------------------------------------------------------------------------
// Emote knowledge probe. Answers are stored for manual review; correctness is
// judged by people, not here.

struct ProbeRecord {
  std::string emote;
  std::string prompt;
  std::string answer;
  std::int64_t ts = 0;
};

inline Prompt build_probe_prompt(std::string_view emote, Sampling sampling = {}) {
  if (emote.empty()) throw Error(Errc::prompt_build_error, "empty emote name");
  return {PromptTemplate::emote_probe, prompt_text::probe_question(emote), std::string(emote), sampling, {}};
}

inline ProbeRecord probe_emote_knowledge(std::string_view emote, ChatClient& client) {
  const Prompt p = build_probe_prompt(emote);
  ProbeRecord rec{std::string(emote), p.rendered_text, client.complete(p.rendered_text, p.sampling), 0};
  rec.ts = std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch()).count();
  return rec;
}

inline json to_json(const ProbeRecord& r) {
  return {{"emote", r.emote}, {"prompt", r.prompt}, {"answer", r.answer}, {"ts", r.ts}};
}

struct ProbeBatchResult {
  std::size_t written = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (emote, error)
};

/// Probes each emote and writes one JSONL record per successful answer.
inline ProbeBatchResult probe_batch(const std::vector<std::string>& emotes, ChatClient& client, std::ostream& out) {
  std::vector<Prompt> prompts;
  for (const auto& e : emotes) prompts.push_back(build_probe_prompt(e));
  auto outcomes = client.complete_all(prompts);
  ProbeBatchResult res;
  const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch()).count();
  for (std::size_t i = 0; i < emotes.size(); ++i) {
    if (!outcomes[i].text) {
      res.failures.emplace_back(emotes[i], outcomes[i].error);
      continue;
    }
    out << to_json(ProbeRecord{emotes[i], prompts[i].rendered_text, *outcomes[i].text, now}).dump() << '\n';
    ++res.written;
  }
  return res;
}

inline json to_json(const Prompt& p) {
  return {{"template", std::string(to_string(p.template_id))},
          {"message_id", p.message_id},
          {"prompt", p.rendered_text},
          {"temperature", p.sampling.temperature},
          {"top_p", p.sampling.top_p}};
}

}  // namespace chatguard
