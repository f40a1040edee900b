// chatguard command-line entry point. Primary outputs go to the files named by
// flags (or stdout where noted); diagnostics go to stderr.

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "chatguard/chatguard.hpp"

using namespace chatguard;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void log_line(const std::string& s) { std::cerr << s << '\n'; }

// Output stream that is either a file or stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw Error(Errc::file_unreadable, "cannot open output file: " + path);
    }
  }
  std::ostream& os() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

struct EmoteInputs {
  std::vector<std::string> catalogs;
  std::string vectors;
  std::string globals;

  void add_flags(CLI::App* app) {
    app->add_option("--catalog", catalogs, "Emote catalog JSON (repeatable; later files win)");
    app->add_option("--vectors", vectors, "Emote vector file (word2vec text format)");
    app->add_option("--globals", globals, "JSON list of global emote names in the vector file");
  }

  std::optional<EmoteCatalog> catalog() const {
    if (catalogs.empty()) return std::nullopt;
    return load_catalogs(catalogs);
  }

  std::optional<EmoteVectorSpace> space() const {
    if (vectors.empty()) return std::nullopt;
    auto s = load_vectors(vectors);
    if (!globals.empty()) {
      const auto missing = s.set_global_names(load_global_names(globals));
      if (missing) log_line("warning: " + std::to_string(missing) + " global names are not in the vector file");
    }
    return s;
  }
};

std::vector<ChatMessage> read_messages(const std::string& log, const std::string& irc) {
  LogReadResult r = irc.empty() ? read_log(log) : read_irc_file(irc);
  if (r.error_count) {
    log_line("warning: skipped " + std::to_string(r.error_count) + " malformed lines");
    for (std::size_t i = 0; i < std::min<std::size_t>(r.errors.size(), 5); ++i) log_line("  " + r.errors[i]);
  }
  return std::move(r.messages);
}

Strategy strategy_arg(const std::string& s) {
  auto p = parse_strategy(s);
  if (!p) throw Error(Errc::invalid_argument, "strategy must be RAW, ED or EGM, got '" + s + "'");
  return *p;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string log, irc, out = "-", prefilter_url;
  std::vector<std::string> catalogs;
  bool keep_toxic = false;
};

void cmd_ingest(const IngestArgs& a) {
  auto messages = read_messages(a.log, a.irc);
  if (!a.catalogs.empty()) {
    const auto catalog = load_catalogs(a.catalogs);
    for (auto& m : messages) m = extract_emotes(m, catalog);
  }
  if (!a.prefilter_url.empty()) {
    HttpClassifierAdapter pre("prefilter", a.prefilter_url);
    std::vector<std::string> texts;
    for (const auto& m : messages) texts.push_back(m.text);
    const auto labels = pre.classify(texts);
    std::vector<ChatMessage> kept;
    for (std::size_t i = 0; i < messages.size(); ++i) {
      messages[i].label = labels[i];
      if (!a.keep_toxic || labels[i] == Label::toxic) kept.push_back(std::move(messages[i]));
    }
    messages = std::move(kept);
  }
  Output out(a.out);
  write_log(out.os(), messages);
  log_line("ingested " + std::to_string(messages.size()) + " messages");
}

struct StatsArgs {
  std::vector<std::string> logs;
  std::vector<std::string> catalogs;
  std::string csv, out = "-";
};

void cmd_stats(const StatsArgs& a) {
  std::vector<ChatMessage> all;
  for (const auto& l : a.logs) {
    auto m = read_messages(l, {});
    all.insert(all.end(), std::make_move_iterator(m.begin()), std::make_move_iterator(m.end()));
  }
  const auto st = usage_stats(all, load_catalogs(a.catalogs));
  Output out(a.out);
  out.os() << to_json(st).dump(2) << '\n';
  if (!a.csv.empty()) {
    Output csv(a.csv);
    write_stats_csv(csv.os(), st);
  }
}

struct MapArgs {
  EmoteInputs emotes;
  std::vector<std::string> names;
  std::size_t k = 3;
  std::string out = "-";
};

void cmd_map(const MapArgs& a) {
  const auto space = a.emotes.space();
  if (!space) throw Error(Errc::invalid_argument, "--vectors is required");
  std::vector<std::string> names = a.names;
  if (names.empty()) {
    if (const auto catalog = a.emotes.catalog()) {
      for (const auto& [name, meta] : catalog->entries()) {
        if (meta.kind == EmoteKind::channel && space->contains(name) && !space->is_global(name)) names.push_back(name);
      }
    } else {
      for (const auto& n : space->names()) {
        if (!space->is_global(n)) names.push_back(n);
      }
    }
  }
  Output out(a.out);
  for (const auto& n : names) out.os() << to_json(top_k_global(n, *space, a.k)).dump() << '\n';
}

struct AugmentArgs {
  std::string log, strategy = "RAW", out = "-";
  EmoteInputs emotes;
};

void cmd_augment(const AugmentArgs& a) {
  const auto messages = read_messages(a.log, {});
  const auto s = strategy_arg(a.strategy);
  const auto catalog = a.emotes.catalog();
  const auto space = a.emotes.space();
  Output out(a.out);
  for (const auto& m : messages) {
    const auto aug = apply_strategy(m, s, catalog ? &*catalog : nullptr, space ? &*space : nullptr);
    json j{{"id", m.id}, {"strategy", std::string(to_string(s))}, {"text", aug.text}};
    if (!aug.warnings.empty()) j["warnings"] = aug.warnings;
    out.os() << j.dump() << '\n';
  }
}

struct PromptArgs {
  std::string log, tmpl = "cot", out = "-", verdicts, chat_url, chat_model;
  EmoteInputs emotes;
  std::size_t k = 3;
  bool send = false;
  double temperature = 0.5, top_p = 0.9;
};

void cmd_prompt(const PromptArgs& a) {
  const auto messages = read_messages(a.log, {});
  const auto catalog = a.emotes.catalog();
  const auto space = a.emotes.space();
  const Sampling sampling{a.temperature, a.top_p};
  std::vector<Prompt> prompts;
  for (const auto& m : messages) {
    if (a.tmpl == "cot") {
      prompts.push_back(build_cot_prompt(m, sampling));
    } else if (a.tmpl == "ed") {
      if (!catalog) throw Error(Errc::invalid_argument, "--template ed needs --catalog");
      prompts.push_back(build_ed_prompt(m, *catalog, sampling));
    } else if (a.tmpl == "egm") {
      if (!space) throw Error(Errc::invalid_argument, "--template egm needs --vectors");
      prompts.push_back(catalog ? build_egm_prompt(m, *catalog, *space, a.k, sampling)
                                : build_egm_prompt(m, *space, a.k, sampling));
    } else {
      throw Error(Errc::invalid_argument, "--template must be cot, ed or egm");
    }
  }
  {
    Output out(a.out);
    for (const auto& p : prompts) {
      for (const auto& w : p.warnings) log_line("warning: " + p.message_id + ": " + w);
      out.os() << to_json(p).dump() << '\n';
    }
  }
  if (!a.send) return;

  ChatClientConfig cfg;
  cfg.url = a.chat_url;
  cfg.model = a.chat_model;
  cfg = ChatClientConfig::from_env(cfg);
  if (!a.chat_url.empty()) cfg.url = a.chat_url;
  if (!a.chat_model.empty()) cfg.model = a.chat_model;
  if (cfg.url.empty()) throw Error(Errc::config_error, "--send needs --chat-url or CHATGUARD_CHAT_URL");
  ChatClient client(std::make_shared<HttpChatBackend>(cfg), cfg);
  const auto outcomes = client.complete_all(prompts);
  Output vout(a.verdicts.empty() ? std::string("-") : a.verdicts);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    json j{{"message_id", prompts[i].message_id}, {"template", std::string(to_string(prompts[i].template_id))}};
    if (!outcomes[i].text) {
      j["status"] = "error";
      j["error"] = outcomes[i].error;
      ++failed;
    } else {
      try {
        const auto v = parse_verdict(*outcomes[i].text);
        j["status"] = "ok";
        j["verdict"] = json::parse(serialize_verdict(v));
        if (!v.warnings.empty()) j["warnings"] = v.warnings;
      } catch (const Error& ex) {
        j["status"] = "unparseable";
        j["error"] = ex.what();
        j["raw"] = *outcomes[i].text;
        ++failed;
      }
    }
    vout.os() << j.dump() << '\n';
  }
  if (failed) log_line("warning: " + std::to_string(failed) + " prompts produced no usable verdict");
}

struct EmbedArgs {
  std::string log, strategy = "RAW", provider = "hash:256", cache;
  std::size_t dim = 0, concurrency = 4;
  bool token_mode = false;
  EmoteInputs emotes;
};

void cmd_embed(const EmbedArgs& a) {
  const auto messages = read_messages(a.log, {});
  const auto catalog = a.emotes.catalog();
  const auto space = a.emotes.space();
  auto provider = make_provider(a.provider, a.dim, a.token_mode);
  EmbedCorpusOptions opts{catalog ? &*catalog : nullptr, space ? &*space : nullptr, a.concurrency};
  const auto r = embed_corpus(messages, strategy_arg(a.strategy), *provider, a.cache, opts);
  log_line("embedded " + std::to_string(r.written) + ", cached " + std::to_string(r.skipped_cached) + ", failed " +
           std::to_string(r.failures.size()));
  for (std::size_t i = 0; i < std::min<std::size_t>(r.failures.size(), 5); ++i) {
    log_line("  " + r.failures[i].first + ": " + r.failures[i].second);
  }
  if (!r.failures.empty()) {
    throw Error(Errc::provider_error, std::to_string(r.failures.size()) + " messages failed to embed; re-run to resume");
  }
}

struct TrainArgs {
  std::string embeddings, model = "rf", out, report, strategy, provider;
  std::uint64_t seed = 42;
  std::size_t trees = 100, splits = 5, repeats = 3, threads = 1;
  double C = 1.0;
  bool no_cv = false;
};

Dataset load_dataset(const std::string& path, const std::string& strategy, const std::string& provider) {
  const auto cache = read_embedding_cache(path, true);
  if (cache.error_count) log_line("warning: skipped " + std::to_string(cache.error_count) + " unreadable records");
  std::optional<Strategy> s;
  if (!strategy.empty()) s = strategy_arg(strategy);
  auto ds = dataset_from_cache(cache.records, s, provider);
  if (ds.size() == 0) throw Error(Errc::empty_input, "no labeled embeddings in " + path);
  return ds;
}

Trainer make_trainer(const TrainArgs& a) {
  if (a.model == "rf") {
    RandomForestConfig cfg;
    cfg.n_estimators = a.trees;
    cfg.seed = a.seed;
    return [cfg](const Dataset& d) -> Model { return train_rf(d, cfg, 1); };
  }
  if (a.model == "svm") {
    LinearSvmConfig cfg;
    cfg.C = a.C;
    cfg.seed = a.seed;
    return [cfg](const Dataset& d) -> Model { return train_svm(d, cfg); };
  }
  throw Error(Errc::invalid_argument, "--model must be rf or svm");
}

void cmd_train(const TrainArgs& a) {
  const auto data = load_dataset(a.embeddings, a.strategy, a.provider);
  data.require_both_classes();
  const Trainer trainer = make_trainer(a);
  if (!a.no_cv) {
    const auto plan = plan_folds(data.labels(), a.splits, a.repeats, a.seed);
    const auto report = cross_validate(data, trainer, plan, a.threads);
    const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
    Output rep(report_path);
    rep.os() << to_json(report).dump(2) << '\n';
    write_text(std::cerr, report);
  }
  const Model model = trainer(data);
  save_model(model, a.out);
  log_line("wrote " + a.out);
}

struct EvalArgs {
  std::string embeddings, model, baseline, out = "-", strategy, provider, format = "json";
  std::size_t iterations = 10000;
  std::uint64_t seed = 42;
};

void cmd_eval(const EvalArgs& a) {
  const auto data = load_dataset(a.embeddings, a.strategy, a.provider);
  const Model model = load_model(a.model);
  if (feature_dim(model) != data.dim()) {
    throw Error(Errc::dimension_mismatch, "model expects " + std::to_string(feature_dim(model)) +
                                              " features, embeddings have " + std::to_string(data.dim()));
  }
  std::vector<Label> pred;
  for (std::size_t i = 0; i < data.size(); ++i) pred.push_back(predict(model, data.row(i)).label);
  const auto m = compute_metrics(std::span<const Label>(pred), data.labels());
  json j{{"model", a.model}, {"model_type", model_type(model)}, {"n", data.size()}, {"metrics", to_json(m)}};
  if (!a.baseline.empty()) {
    const Model base = load_model(a.baseline);
    std::vector<Label> bpred;
    for (std::size_t i = 0; i < data.size(); ++i) bpred.push_back(predict(base, data.row(i)).label);
    const auto bm = compute_metrics(std::span<const Label>(bpred), data.labels());
    const auto bs = paired_bootstrap(pred, bpred, data.labels(), a.iterations, a.seed);
    j["baseline"] = {{"model", a.baseline}, {"metrics", to_json(bm)}};
    j["significance"] = {{"test", "paired-bootstrap-f1"}, {"delta_f1", bs.observed_delta},
                         {"p_value", bs.p_value}, {"iterations", bs.iterations}, {"seed", a.seed}};
  }
  Output out(a.out);
  out.os() << j.dump(2) << '\n';
}

struct PipelineArgs {
  std::string model, strategy = "RAW", provider = "hash:256";
  std::size_t dim = 0;
  EmoteInputs emotes;

  void add_flags(CLI::App* app, bool model_required) {
    auto* opt = app->add_option("--model", model, "Model file");
    if (model_required) opt->required();
    app->add_option("--strategy", strategy, "RAW, ED or EGM")->capture_default_str();
    app->add_option("--provider", provider, "hash:<d> or embedding endpoint URL")->capture_default_str();
    app->add_option("--dim", dim, "Embedding dimension for URL providers");
    emotes.add_flags(app);
  }
};

struct BenchArgs {
  PipelineArgs p;
  std::string irc, log, out = "-";
  std::size_t warmup = 50;
};

void cmd_bench(const BenchArgs& a) {
  std::vector<std::string> lines;
  {
    const std::string& path = a.irc.empty() ? a.log : a.irc;
    std::ifstream in(path);
    if (!in) throw Error(Errc::file_unreadable, "cannot open input: " + path);
    for (std::string line; std::getline(in, line);) {
      if (!utf8::trim(line).empty()) lines.push_back(line);
    }
  }
  const bool irc = !a.irc.empty();
  const Model model = load_model(a.p.model);
  const auto catalog = a.p.emotes.catalog();
  const auto space = a.p.emotes.space();
  auto provider = make_provider(a.p.provider, a.p.dim);
  const Strategy s = strategy_arg(a.p.strategy);
  StagedPipeline pipe;
  pipe.parse = [irc](const std::string& l) { return irc ? parse_irc_line(l) : message_from_json(json::parse(l)); };
  pipe.augment = [&](const ChatMessage& m) {
    return apply_strategy(m, s, catalog ? &*catalog : nullptr, space ? &*space : nullptr);
  };
  pipe.embed = [&](const AugmentedText& t) { return embed(t, *provider).vector; };
  pipe.classify = [&](std::span<const double> x) { return predict(model, x); };
  const auto report = bench_latency(pipe, lines, a.warmup);
  json j = to_json(report);
  j["strategy"] = std::string(to_string(s));
  j["provider"] = provider->id();
  j["model_type"] = model_type(model);
  Output out(a.out);
  out.os() << j.dump(2) << '\n';
  if (!report.valid) throw Error(Errc::pipeline_failure, report.failure);
}

struct CompareArgs {
  PipelineArgs p;
  std::string log, out = "-", format = "text";
  std::vector<std::string> classifiers, hybrids;
};

std::pair<std::string, std::string> split_named(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::invalid_argument, "expected NAME=VALUE, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

void cmd_compare(const CompareArgs& a) {
  const auto messages = read_messages(a.log, {});
  const auto catalog = a.p.emotes.catalog();
  const auto space = a.p.emotes.space();
  std::vector<std::shared_ptr<ClassifierAdapter>> adapters;
  std::shared_ptr<EmbeddingProvider> provider;
  for (const auto& h : a.hybrids) {
    auto [name, path] = split_named(h);
    if (!provider) provider = make_provider(a.p.provider, a.p.dim);
    adapters.push_back(std::make_shared<HybridAdapter>(name, std::make_shared<const Model>(load_model(path)), provider,
                                                       strategy_arg(a.p.strategy), catalog ? &*catalog : nullptr,
                                                       space ? &*space : nullptr));
  }
  for (const auto& c : a.classifiers) {
    auto [name, url] = split_named(c);
    adapters.push_back(std::make_shared<HttpClassifierAdapter>(name, url));
  }
  if (adapters.empty()) throw Error(Errc::invalid_argument, "give at least one --hybrid or --classifier");
  const auto table = benchmark_compare(adapters, messages);
  Output out(a.out);
  if (a.format == "json") out.os() << to_json(table).dump(2) << '\n';
  else write_text(out.os(), table);
}

struct ProbeArgs {
  std::vector<std::string> emotes, catalogs;
  std::string out = "-", chat_url, chat_model;
};

void cmd_probe(const ProbeArgs& a) {
  std::vector<std::string> names = a.emotes;
  if (names.empty() && !a.catalogs.empty()) {
    for (const auto& [name, meta] : load_catalogs(a.catalogs).entries()) {
      if (meta.kind == EmoteKind::channel) names.push_back(name);
    }
  }
  if (names.empty()) throw Error(Errc::invalid_argument, "no emotes to probe; give --emote or --catalog");
  ChatClientConfig cfg = ChatClientConfig::from_env();
  if (!a.chat_url.empty()) cfg.url = a.chat_url;
  if (!a.chat_model.empty()) cfg.model = a.chat_model;
  if (cfg.url.empty()) throw Error(Errc::config_error, "probe needs --chat-url or CHATGUARD_CHAT_URL");
  ChatClient client(std::make_shared<HttpChatBackend>(cfg), cfg);
  Output out(a.out);
  const auto r = probe_batch(names, client, out.os());
  for (const auto& [e, err] : r.failures) log_line("warning: " + e + ": " + err);
  log_line("probed " + std::to_string(r.written) + " emotes");
}

struct VoteArgs {
  std::string annotations, log, out = "-";
};

// Annotation file: JSONL {"id": "...", "labels": ["toxic", "non-toxic", ...]}.
void cmd_vote(const VoteArgs& a) {
  std::ifstream in(a.annotations);
  if (!in) throw Error(Errc::file_unreadable, "cannot open annotations: " + a.annotations);
  std::map<std::string, Label> voted;
  std::vector<std::string> order;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (utf8::trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("labels") || !j["labels"].is_array()) {
      throw Error(Errc::malformed_line, a.annotations + " line " + std::to_string(lineno) + ": expected {id, labels}");
    }
    std::vector<Label> labels;
    for (const auto& l : j["labels"]) {
      auto p = l.is_string() ? parse_label(l.get<std::string>()) : std::nullopt;
      if (!p) throw Error(Errc::malformed_line, a.annotations + " line " + std::to_string(lineno) + ": bad label");
      labels.push_back(*p);
    }
    const std::string id = j["id"].get<std::string>();
    try {
      voted[id] = majority_vote(labels);
    } catch (const Error& ex) {
      throw Error(ex.code(), "message " + id + ": " + ex.what());
    }
    order.push_back(id);
  }
  Output out(a.out);
  if (a.log.empty()) {
    for (const auto& id : order) out.os() << json{{"id", id}, {"label", std::string(to_string(voted[id]))}}.dump() << '\n';
    return;
  }
  auto messages = read_messages(a.log, {});
  std::size_t labeled = 0;
  for (auto& m : messages) {
    if (auto it = voted.find(m.id); it != voted.end()) {
      m.label = it->second;
      ++labeled;
    }
  }
  write_log(out.os(), messages);
  log_line("labeled " + std::to_string(labeled) + " of " + std::to_string(messages.size()) + " messages");
}

struct ServeArgs {
  std::string config, replay, out = "-", irc_host = "irc.chat.twitch.tv", irc_port = "6667";
  std::vector<std::string> channels;
  double rate = 0.0;
  std::optional<std::size_t> workers;
  std::optional<int> status_port;
};

void cmd_serve(const ServeArgs& a) {
  ServiceConfig cfg = ServiceConfig::load(a.config);
  cfg.apply_env();
  if (a.workers) cfg.workers = *a.workers;
  if (a.status_port) cfg.status_port = *a.status_port;
  if (a.replay.empty() == a.channels.empty()) throw Error(Errc::invalid_argument, "give exactly one of --replay or --channel");
  if (cfg.overflow == OverflowPolicy::automatic) {
    cfg.overflow = a.replay.empty() ? OverflowPolicy::shed : OverflowPolicy::block;
  }

  const Moderator moderator = Moderator::from_config(cfg);
  Output out(a.out);
  std::ostream& os = out.os();
  os << moderator.provenance().dump() << '\n';

  std::unique_ptr<WebhookForwarder> webhook;
  if (!cfg.webhook_url.empty()) webhook = std::make_unique<WebhookForwarder>(cfg.webhook_url, cfg.webhook_batch);

  ModerationService service(moderator, cfg.workers, cfg.queue_depth, cfg.overflow, [&](const FlagEvent& e) {
    const json j = to_json(e);
    os << j.dump() << '\n';
    os.flush();
    if (webhook) webhook->push(j);
  });

  std::unique_ptr<StatusServer> status;
  if (cfg.status_port != 0) {
    status = std::make_unique<StatusServer>(cfg.status_host, cfg.status_port, [&] { return service.status(); });
    log_line("status endpoint on http://" + cfg.status_host + ":" + std::to_string(status->port()) + "/status");
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const MessageSink submit = [&](const ChatMessage& m) {
    if (g_stop) throw Error(Errc::sink_failure, "interrupted");
    service.submit(m);
  };
  if (!a.replay.empty()) {
    const auto messages = read_messages(a.replay, {});
    const auto st = replay(messages, a.rate > 0.0 ? a.rate : 1e12, submit);
    if (st.sink_error) log_line("replay stopped: " + *st.sink_error);
  } else {
    IrcConfig irc;
    irc.host = a.irc_host;
    irc.port = a.irc_port;
    irc.channels = a.channels;
    run_irc_reader(irc, submit, g_stop);
  }
  service.finish();
  if (webhook) {
    webhook->close();
    if (webhook->failures()) log_line("warning: " + std::to_string(webhook->failures()) + " webhook batches failed");
  }
  log_line("status " + service.status().dump());
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chatguard: emote-aware toxicity detection for live chat"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse IRC captures or JSONL logs into a JSONL chat log");
  auto* in_src = c_ingest->add_option_group("source");
  in_src->add_option("--log", ingest.log, "JSONL chat log");
  in_src->add_option("--irc", ingest.irc, "Raw IRC capture, one line per message");
  in_src->require_option(1);
  c_ingest->add_option("--catalog", ingest.catalogs, "Resolve emote names against these catalogs");
  c_ingest->add_option("--prefilter-url", ingest.prefilter_url, "External /classify endpoint that labels each message");
  c_ingest->add_flag("--keep-toxic", ingest.keep_toxic, "With --prefilter-url, keep only messages labeled toxic");
  c_ingest->add_option("--out", ingest.out, "Output JSONL (default stdout)");

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "Emote usage statistics as JSON");
  c_stats->add_option("--log", stats.logs, "JSONL chat log (repeatable)")->required();
  c_stats->add_option("--catalog", stats.catalogs, "Emote catalog JSON (repeatable)")->required();
  c_stats->add_option("--csv", stats.csv, "Also write bucket counts as CSV");
  c_stats->add_option("--out", stats.out, "Output JSON (default stdout)");

  MapArgs map;
  auto* c_map = app.add_subcommand("map-emotes", "Nearest global emotes for channel emotes");
  map.emotes.add_flags(c_map);
  c_map->add_option("--emote", map.names, "Channel emote to map (repeatable; default all)");
  c_map->add_option("-k", map.k, "Neighbors per emote")->capture_default_str();
  c_map->add_option("--out", map.out, "Output JSONL (default stdout)");

  AugmentArgs aug;
  auto* c_aug = app.add_subcommand("augment", "Apply a RAW/ED/EGM text strategy to every message");
  c_aug->add_option("--log", aug.log, "JSONL chat log")->required();
  c_aug->add_option("--strategy", aug.strategy, "RAW, ED or EGM")->capture_default_str();
  aug.emotes.add_flags(c_aug);
  c_aug->add_option("--out", aug.out, "Output JSONL (default stdout)");

  PromptArgs prompt;
  auto* c_prompt = app.add_subcommand("prompt", "Render toxicity prompts and optionally send them");
  c_prompt->add_option("--log", prompt.log, "JSONL chat log")->required();
  c_prompt->add_option("--template", prompt.tmpl, "cot, ed or egm")->capture_default_str();
  prompt.emotes.add_flags(c_prompt);
  c_prompt->add_option("-k", prompt.k, "Global emotes per channel emote (egm)")->capture_default_str();
  c_prompt->add_option("--temperature", prompt.temperature)->capture_default_str();
  c_prompt->add_option("--top-p", prompt.top_p)->capture_default_str();
  c_prompt->add_option("--out", prompt.out, "Output JSONL of prompts (default stdout)");
  c_prompt->add_flag("--send", prompt.send, "Send prompts to the chat endpoint and parse verdicts");
  c_prompt->add_option("--verdicts", prompt.verdicts, "Verdict JSONL output (with --send)");
  c_prompt->add_option("--chat-url", prompt.chat_url, "Chat endpoint (overrides CHATGUARD_CHAT_URL)");
  c_prompt->add_option("--chat-model", prompt.chat_model, "Model name sent to the chat endpoint");

  EmbedArgs emb;
  auto* c_embed = app.add_subcommand("embed", "Embed a log into an append-only JSONL cache");
  c_embed->add_option("--log", emb.log, "JSONL chat log")->required();
  c_embed->add_option("--strategy", emb.strategy, "RAW, ED or EGM")->capture_default_str();
  c_embed->add_option("--provider", emb.provider, "hash:<d> or embedding endpoint URL")->capture_default_str();
  c_embed->add_option("--dim", emb.dim, "Expected dimension for URL providers");
  c_embed->add_flag("--token-matrix", emb.token_mode, "Request per-token rows and mean-pool locally");
  c_embed->add_option("--concurrency", emb.concurrency, "Concurrent provider requests")->capture_default_str();
  emb.emotes.add_flags(c_embed);
  c_embed->add_option("--cache", emb.cache, "Embedding cache JSONL (created or resumed)")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a classifier with repeated stratified cross-validation");
  c_train->add_option("--embeddings", train.embeddings, "Embedding cache JSONL with labels")->required();
  c_train->add_option("--model", train.model, "rf or svm")->capture_default_str();
  c_train->add_option("--seed", train.seed)->capture_default_str();
  c_train->add_option("--trees", train.trees, "Random forest size")->capture_default_str();
  c_train->add_option("--C", train.C, "SVM regularization")->capture_default_str();
  c_train->add_option("--splits", train.splits)->capture_default_str();
  c_train->add_option("--repeats", train.repeats)->capture_default_str();
  c_train->add_option("--threads", train.threads, "Folds trained concurrently")->capture_default_str();
  c_train->add_option("--strategy", train.strategy, "Only use records of this strategy");
  c_train->add_option("--provider-id", train.provider, "Only use records of this provider id");
  c_train->add_flag("--no-cv", train.no_cv, "Skip cross-validation");
  c_train->add_option("--out", train.out, "Model file")->required();
  c_train->add_option("--report", train.report, "Fold report JSON (default <out>.report.json)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score a saved model on labeled embeddings");
  c_eval->add_option("--embeddings", ev.embeddings, "Embedding cache JSONL with labels")->required();
  c_eval->add_option("--model", ev.model, "Model file")->required();
  c_eval->add_option("--baseline-model", ev.baseline, "Second model for a paired bootstrap comparison");
  c_eval->add_option("--iterations", ev.iterations, "Bootstrap resamples")->capture_default_str();
  c_eval->add_option("--seed", ev.seed, "Bootstrap seed")->capture_default_str();
  c_eval->add_option("--strategy", ev.strategy, "Only use records of this strategy");
  c_eval->add_option("--provider-id", ev.provider, "Only use records of this provider id");
  c_eval->add_option("--out", ev.out, "Output JSON (default stdout)");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Per-message latency of the offline pipeline");
  bench.p.add_flags(c_bench, true);
  auto* b_src = c_bench->add_option_group("source");
  b_src->add_option("--log", bench.log, "JSONL chat log");
  b_src->add_option("--irc", bench.irc, "Raw IRC capture");
  b_src->require_option(1);
  c_bench->add_option("--warmup", bench.warmup)->capture_default_str();
  c_bench->add_option("--out", bench.out, "Output JSON (default stdout)");

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Compare classifiers on a labeled log");
  c_cmp->add_option("--log", cmp.log, "Labeled JSONL chat log")->required();
  cmp.p.add_flags(c_cmp, false);
  c_cmp->add_option("--hybrid", cmp.hybrids, "NAME=MODEL_FILE, scored through the local pipeline (repeatable)");
  c_cmp->add_option("--classifier", cmp.classifiers, "NAME=URL of a /classify endpoint (repeatable)");
  c_cmp->add_option("--format", cmp.format, "text or json")->capture_default_str();
  c_cmp->add_option("--out", cmp.out, "Output (default stdout)");

  ProbeArgs probe;
  auto* c_probe = app.add_subcommand("probe", "Ask the chat model what each emote means");
  c_probe->add_option("--emote", probe.emotes, "Emote name (repeatable)");
  c_probe->add_option("--catalog", probe.catalogs, "Probe every channel emote in these catalogs");
  c_probe->add_option("--chat-url", probe.chat_url, "Chat endpoint (overrides CHATGUARD_CHAT_URL)");
  c_probe->add_option("--chat-model", probe.chat_model, "Model name sent to the chat endpoint");
  c_probe->add_option("--out", probe.out, "Output JSONL (default stdout)");

  VoteArgs vote;
  auto* c_vote = app.add_subcommand("vote", "Majority vote over annotator labels");
  c_vote->add_option("--annotations", vote.annotations, "JSONL {id, labels[]}")->required();
  c_vote->add_option("--log", vote.log, "Attach the voted labels to this log");
  c_vote->add_option("--out", vote.out, "Output JSONL (default stdout)");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Live moderation service emitting flag events");
  c_serve->add_option("--config", serve.config, "Service config JSON")->required();
  c_serve->add_option("--replay", serve.replay, "Replay a JSONL log instead of connecting to IRC");
  c_serve->add_option("--rate", serve.rate, "Replay rate in messages/s (0 = as fast as possible)");
  c_serve->add_option("--channel", serve.channels, "IRC channel to join (repeatable)");
  c_serve->add_option("--irc-host", serve.irc_host)->capture_default_str();
  c_serve->add_option("--irc-port", serve.irc_port)->capture_default_str();
  c_serve->add_option("--workers", serve.workers, "Override the worker count");
  c_serve->add_option("--status-port", serve.status_port, "Override the status port (-1 picks a free port)");
  c_serve->add_option("--out", serve.out, "Flag event JSONL (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("UsageError", e.what());
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*c_ingest) cmd_ingest(ingest);
    else if (*c_stats) cmd_stats(stats);
    else if (*c_map) cmd_map(map);
    else if (*c_aug) cmd_augment(aug);
    else if (*c_prompt) cmd_prompt(prompt);
    else if (*c_embed) cmd_embed(emb);
    else if (*c_train) cmd_train(train);
    else if (*c_eval) cmd_eval(ev);
    else if (*c_bench) cmd_bench(bench);
    else if (*c_cmp) cmd_compare(cmp);
    else if (*c_probe) cmd_probe(probe);
    else if (*c_vote) cmd_vote(vote);
    else if (*c_serve) cmd_serve(serve);
  } catch (const Error& e) {
    print_error(std::string(e.kind()), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return 1;
  }
  return 0;
}
