#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"

#include "chatguard/benchmark.hpp"
#include "chatguard/embedding.hpp"
#include "chatguard/emote_catalog.hpp"
#include "chatguard/emote_space.hpp"
#include "chatguard/http.hpp"
#include "chatguard/latency.hpp"
#include "chatguard/model_io.hpp"

namespace chatguard {

enum class FallbackPolicy { skip, queue };
enum class OverflowPolicy { automatic, shed, block };

/// Service configuration. JSON keys mirror the field names; every key can be
/// overridden by an environment variable CHATGUARD_<KEY in upper case>.
struct ServiceConfig {
  std::string model_path;
  std::string model_id;  // defaults to the model file name
  Strategy strategy = Strategy::raw;
  std::string provider = "hash:256";
  std::size_t provider_dim = 0;
  std::vector<std::string> catalog_paths;
  std::string space_path;
  std::string globals_path;
  std::size_t queue_depth = 1024;
  FallbackPolicy fallback = FallbackPolicy::skip;
  std::size_t retry_limit = 3;
  std::chrono::milliseconds retry_backoff{200};
  OverflowPolicy overflow = OverflowPolicy::automatic;
  std::size_t workers = 4;
  std::string status_host = "127.0.0.1";
  int status_port = 0;  // 0 disables the status endpoint
  std::string webhook_url;
  std::size_t webhook_batch = 50;

  static ServiceConfig from_json(const json& j) {
    ServiceConfig c;
    try {
      c.model_path = j.value("model_path", c.model_path);
      c.model_id = j.value("model_id", c.model_id);
      if (j.contains("strategy")) {
        auto s = parse_strategy(j["strategy"].get<std::string>());
        if (!s) throw Error(Errc::config_error, "bad strategy in config");
        c.strategy = *s;
      }
      c.provider = j.value("provider", c.provider);
      c.provider_dim = j.value("provider_dim", c.provider_dim);
      if (j.contains("catalog_paths")) c.catalog_paths = j["catalog_paths"].get<std::vector<std::string>>();
      c.space_path = j.value("space_path", c.space_path);
      c.globals_path = j.value("globals_path", c.globals_path);
      c.queue_depth = j.value("queue_depth", c.queue_depth);
      if (j.contains("fallback")) c.fallback = parse_fallback(j["fallback"].get<std::string>());
      c.retry_limit = j.value("retry_limit", c.retry_limit);
      c.retry_backoff = std::chrono::milliseconds(j.value("retry_backoff_ms", c.retry_backoff.count()));
      if (j.contains("overflow")) c.overflow = parse_overflow(j["overflow"].get<std::string>());
      c.workers = j.value("workers", c.workers);
      c.status_host = j.value("status_host", c.status_host);
      c.status_port = j.value("status_port", c.status_port);
      c.webhook_url = j.value("webhook_url", c.webhook_url);
      c.webhook_batch = j.value("webhook_batch", c.webhook_batch);
    } catch (const json::exception& ex) {
      throw Error(Errc::config_error, std::string("bad service config: ") + ex.what());
    }
    return c;
  }

  static ServiceConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::file_unreadable, "cannot open config: " + path);
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::config_error, "config is not a JSON object: " + path);
    return from_json(j);
  }

  void apply_env() {
    auto env = [](const char* k) -> const char* { return std::getenv(k); };
    if (auto v = env("CHATGUARD_MODEL_PATH")) model_path = v;
    if (auto v = env("CHATGUARD_MODEL_ID")) model_id = v;
    if (auto v = env("CHATGUARD_STRATEGY")) {
      auto s = parse_strategy(v);
      if (!s) throw Error(Errc::config_error, "bad CHATGUARD_STRATEGY");
      strategy = *s;
    }
    if (auto v = env("CHATGUARD_PROVIDER")) provider = v;
    if (auto v = env("CHATGUARD_PROVIDER_DIM")) provider_dim = std::stoul(v);
    if (auto v = env("CHATGUARD_SPACE_PATH")) space_path = v;
    if (auto v = env("CHATGUARD_GLOBALS_PATH")) globals_path = v;
    if (auto v = env("CHATGUARD_QUEUE_DEPTH")) queue_depth = std::stoul(v);
    if (auto v = env("CHATGUARD_FALLBACK")) fallback = parse_fallback(v);
    if (auto v = env("CHATGUARD_WORKERS")) workers = std::stoul(v);
    if (auto v = env("CHATGUARD_STATUS_PORT")) status_port = std::stoi(v);
    if (auto v = env("CHATGUARD_WEBHOOK_URL")) webhook_url = v;
  }

  static FallbackPolicy parse_fallback(const std::string& s) {
    if (s == "skip") return FallbackPolicy::skip;
    if (s == "queue") return FallbackPolicy::queue;
    throw Error(Errc::config_error, "fallback must be 'skip' or 'queue'");
  }

  static OverflowPolicy parse_overflow(const std::string& s) {
    if (s == "auto") return OverflowPolicy::automatic;
    if (s == "shed") return OverflowPolicy::shed;
    if (s == "block") return OverflowPolicy::block;
    throw Error(Errc::config_error, "overflow must be 'auto', 'shed' or 'block'");
  }
};

enum class EventStatus { scored, unscored };

/// One output record per input message. An unscored event never carries a label.
struct FlagEvent {
  std::string message_id;
  std::string channel;
  EventStatus status = EventStatus::unscored;
  std::optional<Label> label;
  double score = 0.0;
  Strategy strategy = Strategy::raw;
  std::string model_id;
  double elapsed_ms = 0.0;
  std::int64_t ts = 0;
  std::string reason;  // why the message is unscored
};

inline json to_json(const FlagEvent& e) {
  json j{{"type", "flag"},
         {"message_id", e.message_id},
         {"channel", e.channel},
         {"status", e.status == EventStatus::scored ? "scored" : "unscored"},
         {"label", e.label ? json(std::string(to_string(*e.label))) : json(nullptr)},
         {"score", e.score},
         {"strategy", std::string(to_string(e.strategy))},
         {"model_id", e.model_id},
         {"elapsed_ms", e.elapsed_ms},
         {"ts", e.ts}};
  if (!e.reason.empty()) j["reason"] = e.reason;
  return j;
}

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Everything needed to score a single message. Immutable after construction
/// and safe to share across workers.
class Moderator {
 public:
  Moderator(std::shared_ptr<const Model> model, std::shared_ptr<EmbeddingProvider> provider, Strategy strategy,
            std::shared_ptr<const EmoteCatalog> catalog, std::shared_ptr<const EmoteVectorSpace> space,
            std::string model_id, FallbackPolicy fallback = FallbackPolicy::skip, std::size_t retry_limit = 3,
            std::chrono::milliseconds retry_backoff = std::chrono::milliseconds(200))
      : model_(std::move(model)), provider_(std::move(provider)), strategy_(strategy), catalog_(std::move(catalog)),
        space_(std::move(space)), model_id_(std::move(model_id)), fallback_(fallback), retry_limit_(retry_limit),
        retry_backoff_(retry_backoff) {
    if (feature_dim(*model_) != provider_->dim()) {
      throw Error(Errc::dimension_mismatch, "model expects " + std::to_string(feature_dim(*model_)) +
                                                " features but provider produces " + std::to_string(provider_->dim()));
    }
  }

  static Moderator from_config(const ServiceConfig& cfg) {
    if (cfg.model_path.empty()) throw Error(Errc::config_error, "model_path is required");
    auto model = std::make_shared<const Model>(load_model(cfg.model_path));
    std::shared_ptr<EmoteCatalog> catalog;
    if (!cfg.catalog_paths.empty()) catalog = std::make_shared<EmoteCatalog>(load_catalogs(cfg.catalog_paths));
    std::shared_ptr<EmoteVectorSpace> space;
    if (!cfg.space_path.empty()) {
      space = std::make_shared<EmoteVectorSpace>(load_vectors(cfg.space_path));
      if (!cfg.globals_path.empty()) space->set_global_names(load_global_names(cfg.globals_path));
    }
    std::shared_ptr<EmbeddingProvider> provider = make_provider(cfg.provider, cfg.provider_dim);
    std::string id = cfg.model_id;
    if (id.empty()) {
      const auto slash = cfg.model_path.find_last_of('/');
      id = slash == std::string::npos ? cfg.model_path : cfg.model_path.substr(slash + 1);
    }
    return Moderator(std::move(model), std::move(provider), cfg.strategy, std::move(catalog), std::move(space), id,
                     cfg.fallback, cfg.retry_limit, cfg.retry_backoff);
  }

  FlagEvent score(const ChatMessage& message) const {
    const auto t0 = std::chrono::steady_clock::now();
    FlagEvent ev;
    ev.message_id = message.id;
    ev.channel = message.channel;
    ev.strategy = strategy_;
    ev.model_id = model_id_;
    const auto aug = apply_strategy(message, strategy_, catalog_.get(), space_.get());
    std::optional<MessageEmbedding> emb;
    const std::size_t attempts = fallback_ == FallbackPolicy::queue ? std::max<std::size_t>(1, retry_limit_) : 1;
    auto delay = retry_backoff_;
    for (std::size_t a = 1; a <= attempts && !emb; ++a) {
      try {
        emb = embed(aug, *provider_);
      } catch (const std::exception& ex) {
        ev.reason = std::string("embedding failed: ") + ex.what();
        if (a < attempts) {
          std::this_thread::sleep_for(delay);
          delay *= 2;
        }
      }
    }
    if (emb) {
      const auto p = predict(*model_, emb->vector);
      ev.status = EventStatus::scored;
      ev.label = p.label;
      ev.score = p.score;
      ev.reason.clear();
    }
    ev.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    ev.ts = now_ms();
    return ev;
  }

  FlagEvent unscored(const ChatMessage& message, std::string reason) const {
    FlagEvent ev;
    ev.message_id = message.id;
    ev.channel = message.channel;
    ev.strategy = strategy_;
    ev.model_id = model_id_;
    ev.reason = std::move(reason);
    ev.ts = now_ms();
    return ev;
  }

  json provenance() const {
    json j{{"type", "header"},
           {"model_id", model_id_},
           {"model_type", model_type(*model_)},
           {"strategy", std::string(to_string(strategy_))},
           {"provider", provider_->id()},
           {"feature_dim", provider_->dim()}};
    if (const auto* rf = std::get_if<RandomForestModel>(model_.get())) j["model_seed"] = rf->config.seed;
    if (const auto* svm = std::get_if<LinearSvmModel>(model_.get())) j["model_seed"] = svm->config.seed;
    return j;
  }

 private:
  std::shared_ptr<const Model> model_;
  std::shared_ptr<EmbeddingProvider> provider_;
  Strategy strategy_;
  std::shared_ptr<const EmoteCatalog> catalog_;
  std::shared_ptr<const EmoteVectorSpace> space_;
  std::string model_id_;
  FallbackPolicy fallback_;
  std::size_t retry_limit_;
  std::chrono::milliseconds retry_backoff_;
};

/// Posts batches of events to a webhook from a background thread.
class WebhookForwarder {
 public:
  WebhookForwarder(std::string url, std::size_t batch) : url_(std::move(url)), batch_(std::max<std::size_t>(1, batch)) {
    thread_ = std::thread([this] { loop(); });
  }
  ~WebhookForwarder() { close(); }
  WebhookForwarder(const WebhookForwarder&) = delete;
  WebhookForwarder& operator=(const WebhookForwarder&) = delete;

  void push(json event) {
    std::lock_guard lock(mu_);
    pending_.push_back(std::move(event));
    if (pending_.size() >= batch_) cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      closed_ = true;
    }
    cv_.notify_one();
    if (thread_.joinable()) thread_.join();
  }

  std::size_t failures() const { return failures_.load(); }

 private:
  void loop() {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait_for(lock, std::chrono::milliseconds(500), [&] { return closed_ || pending_.size() >= batch_; });
      if (!pending_.empty()) {
        json batch = json::array();
        while (!pending_.empty() && batch.size() < batch_) {
          batch.push_back(std::move(pending_.front()));
          pending_.pop_front();
        }
        lock.unlock();
        try {
          http::post_json(url_, json{{"events", batch}}, {std::chrono::seconds(10), {}});
        } catch (const std::exception&) {
          ++failures_;
        }
        lock.lock();
        continue;
      }
      if (closed_) return;
    }
  }

  std::string url_;
  std::size_t batch_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<json> pending_;
  bool closed_ = false;
  std::atomic<std::size_t> failures_{0};
  std::thread thread_;
};

using EventSink = std::function<void(const FlagEvent&)>;

/// Bounded worker pool with ordered emission. Events are emitted in
/// submission order, which preserves per-channel arrival order. When the queue
/// is full, `shed` marks the oldest queued message UNSCORED and `block` makes
/// submit() wait.
class ModerationService {
 public:
  ModerationService(const Moderator& moderator, std::size_t workers, std::size_t queue_depth, OverflowPolicy overflow,
                    EventSink sink)
      : moderator_(moderator), queue_depth_(std::max<std::size_t>(1, queue_depth)),
        overflow_(overflow == OverflowPolicy::automatic ? OverflowPolicy::shed : overflow), sink_(std::move(sink)) {
    for (std::size_t w = 0; w < std::max<std::size_t>(1, workers); ++w) pool_.emplace_back([this] { work(); });
  }

  ~ModerationService() { finish(); }
  ModerationService(const ModerationService&) = delete;
  ModerationService& operator=(const ModerationService&) = delete;

  void submit(ChatMessage message) {
    std::unique_lock lock(mu_);
    if (closed_) throw Error(Errc::invalid_argument, "service is closed");
    if (overflow_ == OverflowPolicy::block) {
      space_cv_.wait(lock, [&] { return queue_.size() < queue_depth_; });
    } else if (queue_.size() >= queue_depth_) {
      Item oldest = std::move(queue_.front());
      queue_.pop_front();
      ++shed_;
      complete(oldest.seq, moderator_.unscored(oldest.message, "backpressure: queue depth exceeded"));
    }
    queue_.push_back({next_seq_++, std::move(message)});
    work_cv_.notify_one();
  }

  /// Stops accepting input, drains the queue and joins the workers.
  void finish() {
    {
      std::lock_guard lock(mu_);
      if (closed_ && pool_.empty()) return;
      closed_ = true;
    }
    work_cv_.notify_all();
    for (auto& t : pool_) t.join();
    pool_.clear();
  }

  json status() const {
    json j = latency_.snapshot();
    std::lock_guard lock(mu_);
    j["emitted"] = next_emit_;
    j["unscored"] = unscored_;
    j["shed"] = shed_;
    j["queued"] = queue_.size();
    return j;
  }

 private:
  struct Item {
    std::uint64_t seq;
    ChatMessage message;
  };

  void work() {
    for (;;) {
      Item item;
      {
        std::unique_lock lock(mu_);
        work_cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
        if (queue_.empty()) return;
        item = std::move(queue_.front());
        queue_.pop_front();
        space_cv_.notify_one();
      }
      FlagEvent ev = moderator_.score(item.message);
      if (ev.status == EventStatus::scored) latency_.record(ev.elapsed_ms);
      std::lock_guard lock(mu_);
      complete(item.seq, std::move(ev));
    }
  }

  // Requires mu_. Emits the contiguous completed prefix.
  void complete(std::uint64_t seq, FlagEvent ev) {
    done_.emplace(seq, std::move(ev));
    for (auto it = done_.find(next_emit_); it != done_.end(); it = done_.find(next_emit_)) {
      if (it->second.status == EventStatus::unscored) ++unscored_;
      sink_(it->second);
      done_.erase(it);
      ++next_emit_;
    }
  }

  const Moderator& moderator_;
  std::size_t queue_depth_;
  OverflowPolicy overflow_;
  EventSink sink_;
  mutable std::mutex mu_;
  std::condition_variable work_cv_, space_cv_;
  std::deque<Item> queue_;
  std::map<std::uint64_t, FlagEvent> done_;
  std::uint64_t next_seq_ = 0, next_emit_ = 0;
  std::size_t unscored_ = 0, shed_ = 0;
  bool closed_ = false;
  RollingLatency latency_;
  std::vector<std::thread> pool_;
};

/// GET /status on a background thread.
class StatusServer {
 public:
  StatusServer(std::string host, int port, std::function<json()> status) {
    server_.Get("/status", [status = std::move(status)](const httplib::Request&, httplib::Response& res) {
      res.set_content(status().dump(), "application/json");
    });
    if (port == -1) {
      port_ = server_.bind_to_any_port(host);
    } else {
      if (!server_.bind_to_port(host, port)) throw Error(Errc::config_error, "cannot bind status endpoint on port " + std::to_string(port));
      port_ = port;
    }
    if (port_ < 0) throw Error(Errc::config_error, "cannot bind status endpoint");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StatusServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace chatguard
