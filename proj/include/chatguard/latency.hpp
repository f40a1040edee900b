#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "chatguard/chat_ingest.hpp"
#include "chatguard/dataset.hpp"
#include "chatguard/embedding.hpp"
#include "chatguard/error.hpp"

namespace chatguard {

struct LatencySummary {
  std::size_t count = 0;
  double mean = 0.0, p50 = 0.0, p95 = 0.0, min = 0.0, max = 0.0;
};

// Nearest-rank percentile on a sorted sample, q in (0, 1].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

inline LatencySummary summarize_latency(std::vector<double> samples_ms) {
  LatencySummary s;
  s.count = samples_ms.size();
  if (samples_ms.empty()) return s;
  std::sort(samples_ms.begin(), samples_ms.end());
  s.min = samples_ms.front();
  s.max = samples_ms.back();
  s.mean = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / static_cast<double>(samples_ms.size());
  s.mean = std::clamp(s.mean, s.min, s.max);
  s.p50 = percentile_sorted(samples_ms, 0.50);
  s.p95 = percentile_sorted(samples_ms, 0.95);
  return s;
}

inline json to_json(const LatencySummary& s) {
  return {{"count", s.count}, {"mean_ms", s.mean}, {"p50_ms", s.p50}, {"p95_ms", s.p95}, {"min_ms", s.min}, {"max_ms", s.max}};
}

/// One message through parse -> augment -> embed -> classify. Each stage is
/// timed separately by bench_latency.
struct StagedPipeline {
  std::function<ChatMessage(const std::string&)> parse;
  std::function<AugmentedText(const ChatMessage&)> augment;
  std::function<std::vector<double>(const AugmentedText&)> embed;
  std::function<Prediction(std::span<const double>)> classify;
};

struct LatencyReport {
  std::vector<double> samples_ms;  // end-to-end per message
  LatencySummary total;
  LatencySummary parse, augment, embed, classify;
  bool valid = true;
  std::string failure;
};

inline json to_json(const LatencyReport& r) {
  return {{"total", to_json(r.total)},
          {"stages", {{"parse", to_json(r.parse)}, {"augment", to_json(r.augment)},
                      {"embed", to_json(r.embed)}, {"classify", to_json(r.classify)}}},
          {"classify_only_mean_ms", r.classify.mean},
          {"valid", r.valid},
          {"failure", r.failure},
          {"timing", "wall-clock, single thread"}};
}

/// Runs `warmup` untimed messages (cycling through `raw_lines`), then times
/// every line once. A failing stage aborts; the report keeps the partial
/// samples and is marked invalid.
inline LatencyReport bench_latency(const StagedPipeline& pipeline, const std::vector<std::string>& raw_lines,
                                   std::size_t warmup = 50) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
  if (raw_lines.empty()) throw Error(Errc::empty_input, "no messages to benchmark");

  LatencyReport report;
  for (std::size_t i = 0; i < warmup; ++i) {
    try {
      const auto m = pipeline.parse(raw_lines[i % raw_lines.size()]);
      const auto a = pipeline.augment(m);
      const auto e = pipeline.embed(a);
      (void)pipeline.classify(e);
    } catch (const std::exception& ex) {
      throw Error(Errc::pipeline_failure, std::string("warmup failed: ") + ex.what());
    }
  }
  std::vector<double> p, a, e, c;
  for (const auto& line : raw_lines) {
    try {
      const auto t0 = clock::now();
      const auto msg = pipeline.parse(line);
      const auto t1 = clock::now();
      const auto aug = pipeline.augment(msg);
      const auto t2 = clock::now();
      const auto vec = pipeline.embed(aug);
      const auto t3 = clock::now();
      const auto pred = pipeline.classify(vec);
      const auto t4 = clock::now();
      (void)pred;
      p.push_back(ms(t1 - t0));
      a.push_back(ms(t2 - t1));
      e.push_back(ms(t3 - t2));
      c.push_back(ms(t4 - t3));
      report.samples_ms.push_back(ms(t4 - t0));
    } catch (const std::exception& ex) {
      report.valid = false;
      report.failure = std::string(errc_name(Errc::pipeline_failure)) + ": " + ex.what();
      break;
    }
  }
  if (report.valid && report.samples_ms.empty()) throw Error(Errc::empty_input, "no post-warmup samples");
  report.total = summarize_latency(report.samples_ms);
  report.parse = summarize_latency(p);
  report.augment = summarize_latency(a);
  report.embed = summarize_latency(e);
  report.classify = summarize_latency(c);
  return report;
}

/// Fixed-capacity window of recent latencies plus a log-spaced histogram of
/// everything recorded; thread-safe.
class RollingLatency {
 public:
  explicit RollingLatency(std::size_t window = 4096) : window_(window) {}

  static constexpr std::array<double, 12> bucket_upper_ms{0.1, 0.25, 0.5, 1, 2.5, 5, 10, 25, 50, 100, 250, 1000};

  void record(double ms) {
    std::lock_guard lock(mu_);
    recent_.push_back(ms);
    if (recent_.size() > window_) recent_.pop_front();
    std::size_t b = 0;
    while (b < bucket_upper_ms.size() && ms > bucket_upper_ms[b]) ++b;
    ++counts_[b];
    ++total_;
  }

  json snapshot() const {
    std::lock_guard lock(mu_);
    const auto s = summarize_latency(std::vector<double>(recent_.begin(), recent_.end()));
    json hist = json::array();
    for (std::size_t b = 0; b < counts_.size(); ++b) {
      hist.push_back({{"le_ms", b < bucket_upper_ms.size() ? json(bucket_upper_ms[b]) : json("inf")},
                      {"count", counts_[b]}});
    }
    return {{"processed", total_}, {"p50_ms", s.p50}, {"p95_ms", s.p95}, {"mean_ms", s.mean},
            {"window", s.count}, {"histogram", hist}};
  }

 private:
  mutable std::mutex mu_;
  std::size_t window_;
  std::deque<double> recent_;
  std::array<std::size_t, bucket_upper_ms.size() + 1> counts_{};
  std::size_t total_ = 0;
};

}  // namespace chatguard
