#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <sstream>

#include "chatguard/prompting.hpp"
#include "support.hpp"

using namespace chatguard;
using testsupport::fixture;
using testsupport::slurp;

namespace {

ChatMessage msg(std::string text) {
  ChatMessage m;
  m.id = "m1";
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

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

const std::string golden_text = "pepeD you are trash hasMods pepeD";

}  // namespace

TEST(PromptGolden, Cot) {
  EXPECT_EQ(build_cot_prompt(msg(golden_text)).rendered_text, slurp(fixture("prompt_cot.golden")));
}

TEST(PromptGolden, Ed) {
  EXPECT_EQ(build_ed_prompt(msg(golden_text), fixture_catalog()).rendered_text, slurp(fixture("prompt_ed.golden")));
}

TEST(PromptGolden, Egm) {
  EXPECT_EQ(build_egm_prompt(msg(golden_text), fixture_space()).rendered_text, slurp(fixture("prompt_egm.golden")));
  EXPECT_EQ(build_egm_prompt(msg(golden_text), fixture_catalog(), fixture_space()).rendered_text,
            slurp(fixture("prompt_egm.golden")));
}

TEST(CotPrompt, TemplateAndDefaults) {
  const auto p = build_cot_prompt(msg("you are trash"));
  EXPECT_NE(p.rendered_text.find("flag the comment as <toxic> or <non-toxic>"), std::string::npos);
  EXPECT_NE(p.rendered_text.find("<obscene, threat, insult, identity attack, sexually explicit>"), std::string::npos);
  EXPECT_EQ(count_of(p.rendered_text, "you are trash"), 1u);
  EXPECT_EQ(p.template_id, PromptTemplate::cot);
  EXPECT_DOUBLE_EQ(p.sampling.temperature, 0.5);
  EXPECT_DOUBLE_EQ(p.sampling.top_p, 0.9);
  EXPECT_EQ(p.message_id, "m1");
}

TEST(CotPrompt, EmptyTextRejectedAndEmotesIgnored) {
  try {
    build_cot_prompt(msg("   "));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::prompt_build_error);
  }
  auto with = msg("Kappa hi");
  with.emote_spans.push_back({"Kappa", "25", 0, 4, EmoteKind::global});
  EXPECT_EQ(build_cot_prompt(with).rendered_text, build_cot_prompt(msg("Kappa hi")).rendered_text);
}

TEST(EdPrompt, ClauseDedupAndNoDescription) {
  const auto cat = fixture_catalog();
  const auto p = build_ed_prompt(msg("pepeD hi pepeD"), cat);
  EXPECT_EQ(count_of(p.rendered_text, "Consider that pepeD in this comment is described as a dancing green frog."), 1u);
  EXPECT_EQ(count_of(p.rendered_text, "Perform step-by-step reasoning."), 1u);
  EXPECT_EQ(p.template_id, PromptTemplate::cot_ed);
  // hasO has no description; a global emote never gets a clause.
  EXPECT_EQ(build_ed_prompt(msg("hasO Kappa"), cat).rendered_text, build_cot_prompt(msg("hasO Kappa")).rendered_text);
}

TEST(EgmPrompt, ClausesWarningsAndGlobalsOnly) {
  const auto cat = fixture_catalog();
  const auto space = fixture_space();
  const auto p = build_egm_prompt(msg("pepeD hasKiss"), cat, space);
  EXPECT_NE(p.rendered_text.find("Consider that pepeD in this comment is closest to Global Emotes:(Kappa,LUL,PogChamp)."),
            std::string::npos);
  ASSERT_EQ(p.warnings.size(), 1u);
  EXPECT_NE(p.warnings[0].find("hasKiss"), std::string::npos);
  EXPECT_EQ(build_egm_prompt(msg("Kappa LUL"), space).rendered_text, build_cot_prompt(msg("Kappa LUL")).rendered_text);
}

TEST(PromptProperty, DeterministicAndCommentPreserved) {
  const auto cat = fixture_catalog();
  const auto space = fixture_space();
  const std::vector<std::string> vocab{"pepeD", "hasL", "hasMods", "hasO", "hasKiss", "Kappa", "you", "are", "ok", "\xC3\xA9t\xC3\xA9"};
  std::mt19937_64 rng(13);
  for (int t = 0; t < 300; ++t) {
    std::string text = vocab[rng() % vocab.size()];
    for (int i = 0, n = static_cast<int>(rng() % 10); i < n; ++i) text += " " + vocab[rng() % vocab.size()];
    const auto m = msg(text);
    for (const auto& p : {build_ed_prompt(m, cat), build_egm_prompt(m, cat, space), build_egm_prompt(m, space)}) {
      EXPECT_NE(p.rendered_text.find("Comment: \"" + text + "\"\n"), std::string::npos);
    }
    EXPECT_EQ(build_ed_prompt(m, cat).rendered_text, build_ed_prompt(m, cat).rendered_text);
    EXPECT_EQ(build_egm_prompt(m, cat, space).rendered_text, build_egm_prompt(m, cat, space).rendered_text);
    const auto ed = build_ed_prompt(m, cat).rendered_text;
    const auto contract = std::string(prompt_text::json_contract);
    EXPECT_EQ(ed.substr(ed.size() - contract.size()), contract);
  }
}

TEST(Verdict, FixturesWellFormed) {
  const json fx = json::parse(slurp(fixture("verdicts.json")));
  for (const auto& c : fx["well_formed"]) {
    const auto raw = c["raw"].get<std::string>();
    const auto v = parse_verdict(raw);
    EXPECT_EQ(v.toxic, c["toxic"].get<bool>()) << raw;
    EXPECT_EQ(v.emote_considered, c["emote"].get<bool>()) << raw;
    std::set<ToxicityCategory> expected;
    for (const auto& s : c["categories"]) expected.insert(*parse_category(s.get<std::string>()));
    EXPECT_EQ(v.categories, expected) << raw;
    EXPECT_EQ(v.raw, raw);
    const auto again = parse_verdict(serialize_verdict(v));
    EXPECT_TRUE(again.same_decision(v)) << raw;
  }
}

TEST(Verdict, FixturesMalformed) {
  const json fx = json::parse(slurp(fixture("verdicts.json")));
  for (const auto& c : fx["malformed"]) {
    try {
      parse_verdict(c.get<std::string>());
      ADD_FAILURE() << "accepted: " << c;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::unparseable_verdict);
    }
  }
}

TEST(Verdict, UnknownCategoryDroppedWithWarning) {
  const auto v = parse_verdict(R"({"Is it toxic":"yes","category":"insult, spam","explanation":"x"})");
  EXPECT_EQ(v.categories, std::set<ToxicityCategory>{ToxicityCategory::insult});
  ASSERT_EQ(v.warnings.size(), 1u);
  EXPECT_NE(v.warnings[0].find("spam"), std::string::npos);
  // A non-toxic verdict carries no categories even when the model lists some.
  EXPECT_TRUE(parse_verdict(R"({"Is it toxic":"no","category":"insult"})").categories.empty());
}

TEST(VerdictProperty, SerializeRoundTrip) {
  std::mt19937_64 rng(17);
  const std::vector<std::string> expl{"", "plain", "has \"quotes\" and {braces}", "unicode \xE2\x9C\x93", "line\nbreak"};
  for (int t = 0; t < 500; ++t) {
    Verdict v;
    v.toxic = rng() % 2;
    if (v.toxic) {
      for (int c = 0; c < 5; ++c) if (rng() % 2) v.categories.insert(static_cast<ToxicityCategory>(c));
    }
    v.explanation = expl[rng() % expl.size()];
    v.emote_considered = rng() % 2;
    const auto back = parse_verdict(serialize_verdict(v));
    EXPECT_TRUE(back.same_decision(v));
  }
}

// --- chat client against a local canned-response endpoint -----------------

namespace {

struct FakeChat {
  testsupport::LocalServer srv;
  std::atomic<int> calls{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};
  std::atomic<int> fail_first{0};
  json last_body;
  std::mutex mu;

  FakeChat() {
    srv.server().Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight;
      int prev = max_in_flight.load();
      while (now > prev && !max_in_flight.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      const int n = ++calls;
      {
        std::lock_guard lock(mu);
        last_body = json::parse(req.body);
      }
      --in_flight;
      if (n <= fail_first.load()) {
        res.status = 503;
        return;
      }
      const auto content = json::parse(req.body)["messages"][0]["content"].get<std::string>();
      const std::string answer = content.find("trash") != std::string::npos
                                     ? R"({"Is it toxic":"yes","category":"insult","explanation":"insult","emote":"no"})"
                                     : "An answer about " + content.substr(0, 40);
      res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", answer}}}}}}}.dump(),
                      "application/json");
    });
    srv.server().Post("/text", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"text":"plain"})", "application/json");
    });
    srv.start();
  }

  ChatClientConfig config() {
    ChatClientConfig c;
    c.url = srv.url("/v1/chat/completions");
    c.model = "test-model";
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(5000);
    return c;
  }
};

}  // namespace

TEST(ChatClient, SendsContractAndParsesVerdict) {
  FakeChat fake;
  auto cfg = fake.config();
  ChatClient client(std::make_shared<HttpChatBackend>(cfg), cfg);
  const auto p = build_cot_prompt(msg("you are trash"));
  const auto v = parse_verdict(client.complete(p.rendered_text, p.sampling));
  EXPECT_TRUE(v.toxic);
  EXPECT_EQ(fake.last_body["model"], "test-model");
  EXPECT_DOUBLE_EQ(fake.last_body["temperature"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(fake.last_body["top_p"].get<double>(), 0.9);
  EXPECT_EQ(fake.last_body["messages"][0]["role"], "user");

  auto plain = cfg;
  plain.url = fake.srv.url("/text");
  EXPECT_EQ(HttpChatBackend(plain).complete("x", {}), "plain");
}

TEST(ChatClient, RetriesThenSucceeds) {
  FakeChat fake;
  fake.fail_first = 2;
  auto cfg = fake.config();
  cfg.max_attempts = 3;
  ChatClient client(std::make_shared<HttpChatBackend>(cfg), cfg);
  EXPECT_FALSE(client.complete("hello").empty());
  EXPECT_EQ(fake.calls.load(), 3);
}

TEST(ChatClient, OfflineRaisesClientError) {
  ChatClientConfig cfg;
  cfg.url = "http://127.0.0.1:1/v1/chat/completions";
  cfg.max_attempts = 2;
  cfg.backoff = std::chrono::milliseconds(1);
  cfg.timeout = std::chrono::milliseconds(500);
  ChatClient client(std::make_shared<HttpChatBackend>(cfg), cfg);
  try {
    client.complete("hello");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::client_error);
  }
  EXPECT_THROW(HttpChatBackend(ChatClientConfig{}), Error);
}

TEST(ChatClient, BoundedInFlight) {
  FakeChat fake;
  auto cfg = fake.config();
  cfg.max_in_flight = 2;
  ChatClient client(std::make_shared<HttpChatBackend>(cfg), cfg);
  std::vector<Prompt> prompts;
  for (int i = 0; i < 8; ++i) prompts.push_back(build_cot_prompt(msg("comment " + std::to_string(i))));
  const auto outs = client.complete_all(prompts);
  ASSERT_EQ(outs.size(), 8u);
  for (const auto& o : outs) EXPECT_TRUE(o.text.has_value());
  EXPECT_LE(fake.max_in_flight.load(), 2);
}

TEST(ChatClientConfig, EnvironmentOverrides) {
  ::setenv("CHATGUARD_CHAT_URL", "http://127.0.0.1:9/x", 1);
  ::setenv("CHATGUARD_CHAT_MODEL", "env-model", 1);
  const auto c = ChatClientConfig::from_env();
  EXPECT_EQ(c.url, "http://127.0.0.1:9/x");
  EXPECT_EQ(c.model, "env-model");
  ::unsetenv("CHATGUARD_CHAT_URL");
  ::unsetenv("CHATGUARD_CHAT_MODEL");
}

TEST(Probe, BatchWritesReviewableJsonl) {
  FakeChat fake;
  auto cfg = fake.config();
  ChatClient client(std::make_shared<HttpChatBackend>(cfg), cfg);
  const auto rec = probe_emote_knowledge("Kappa", client);
  EXPECT_FALSE(rec.answer.empty());
  EXPECT_NE(rec.prompt.find("Kappa"), std::string::npos);

  std::ostringstream out;
  const auto r = probe_batch({"Kappa", "pepeD", "hasL"}, client, out);
  EXPECT_EQ(r.written, 3u);
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> emotes;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    for (const char* k : {"emote", "prompt", "answer", "ts"}) EXPECT_TRUE(j.contains(k)) << k;
    emotes.push_back(j["emote"]);
  }
  EXPECT_EQ(emotes, (std::vector<std::string>{"Kappa", "pepeD", "hasL"}));
}
