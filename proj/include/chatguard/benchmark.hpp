#pragma once

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "chatguard/embedding.hpp"
#include "chatguard/http.hpp"
#include "chatguard/latency.hpp"
#include "chatguard/metrics.hpp"
#include "chatguard/model_io.hpp"

namespace chatguard {

/// Anything that labels raw message text. Used for the comparison table and
/// for external prefilter passes.
class ClassifierAdapter {
 public:
  virtual ~ClassifierAdapter() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Label> classify(const std::vector<std::string>& texts) = 0;
};

/// External classifier contract: POST /classify {"texts":[...]} ->
/// {"labels":["toxic"|"non-toxic"], "scores":[...]}.
class HttpClassifierAdapter : public ClassifierAdapter {
 public:
  HttpClassifierAdapter(std::string name, std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : name_(std::move(name)), timeout_(timeout) {
    const auto u = http::split_url(url);
    endpoint_ = u.path == "/" ? u.origin + "/classify" : url;
  }

  std::string name() const override { return name_; }

  std::vector<Label> classify(const std::vector<std::string>& texts) override {
    const json res = http::post_json(endpoint_, json{{"texts", texts}}, {timeout_, {}}, Errc::client_error);
    std::vector<Label> out;
    try {
      for (const auto& l : res.at("labels")) {
        auto parsed = parse_label(l.get<std::string>());
        if (!parsed) throw Error(Errc::client_error, "classifier returned unknown label " + l.dump());
        out.push_back(*parsed);
      }
    } catch (const json::exception& ex) {
      throw Error(Errc::client_error, std::string("bad /classify response: ") + ex.what());
    }
    if (out.size() != texts.size()) throw Error(Errc::client_error, "classifier returned wrong number of labels");
    return out;
  }

 private:
  std::string name_;
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

/// The in-process hybrid pipeline: strategy -> embedding -> trained model.
class HybridAdapter : public ClassifierAdapter {
 public:
  HybridAdapter(std::string name, std::shared_ptr<const Model> model, std::shared_ptr<EmbeddingProvider> provider,
                Strategy strategy, const EmoteCatalog* catalog, const EmoteVectorSpace* space)
      : name_(std::move(name)), model_(std::move(model)), provider_(std::move(provider)), strategy_(strategy),
        catalog_(catalog), space_(space) {}

  std::string name() const override { return name_; }

  std::vector<Label> classify(const std::vector<std::string>& texts) override {
    std::vector<Label> out;
    for (const auto& t : texts) {
      ChatMessage m;
      m.text = t;
      const auto aug = apply_strategy(m, strategy_, catalog_, space_);
      const auto e = embed(aug, *provider_);
      out.push_back(predict(*model_, e.vector).label);
    }
    return out;
  }

 private:
  std::string name_;
  std::shared_ptr<const Model> model_;
  std::shared_ptr<EmbeddingProvider> provider_;
  Strategy strategy_;
  const EmoteCatalog* catalog_;
  const EmoteVectorSpace* space_;
};

struct ComparisonRow {
  std::string model;
  bool ok = false;
  std::string error;
  Metrics metrics;
  double latency_ms = 0.0;  // mean wall-clock per message
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  // Per column, indices of rows holding the best value (ties all marked).
  std::vector<std::size_t> best_precision, best_recall, best_f1, best_accuracy, best_latency;
};

namespace detail {
template <typename Get>
std::vector<std::size_t> best_rows(const std::vector<ComparisonRow>& rows, Get get, bool lower_is_better) {
  std::vector<std::size_t> best;
  double best_v = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].ok) continue;
    const double v = get(rows[i]);
    const bool better = best.empty() || (lower_is_better ? v < best_v : v > best_v);
    if (better) {
      best = {i};
      best_v = v;
    } else if (v == best_v) {
      best.push_back(i);
    }
  }
  return best;
}
}  // namespace detail

/// Scores each adapter one message at a time over labeled messages. A failing
/// adapter yields a FAILED row; the others still run.
inline ComparisonTable benchmark_compare(const std::vector<std::shared_ptr<ClassifierAdapter>>& adapters,
                                        const std::vector<ChatMessage>& labeled) {
  std::vector<Label> truth;
  std::vector<std::string> texts;
  for (const auto& m : labeled) {
    if (!m.label) continue;
    truth.push_back(*m.label);
    texts.push_back(m.text);
  }
  if (truth.empty()) throw Error(Errc::empty_input, "comparison needs labeled messages");

  ComparisonTable table;
  for (const auto& adapter : adapters) {
    ComparisonRow row;
    row.model = adapter->name();
    try {
      std::vector<Label> pred;
      double total_ms = 0.0;
      for (const auto& t : texts) {
        const auto t0 = std::chrono::steady_clock::now();
        auto out = adapter->classify({t});
        total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (out.size() != 1) throw Error(Errc::client_error, "adapter returned wrong number of labels");
        pred.push_back(out.front());
      }
      row.metrics = compute_metrics(std::span<const Label>(pred), std::span<const Label>(truth));
      row.latency_ms = total_ms / static_cast<double>(texts.size());
      row.ok = true;
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
    table.rows.push_back(std::move(row));
  }
  table.best_precision = detail::best_rows(table.rows, [](const auto& r) { return r.metrics.precision; }, false);
  table.best_recall = detail::best_rows(table.rows, [](const auto& r) { return r.metrics.recall; }, false);
  table.best_f1 = detail::best_rows(table.rows, [](const auto& r) { return r.metrics.f1; }, false);
  table.best_accuracy = detail::best_rows(table.rows, [](const auto& r) { return r.metrics.accuracy; }, false);
  table.best_latency = detail::best_rows(table.rows, [](const auto& r) { return r.latency_ms; }, true);
  return table;
}

inline json to_json(const ComparisonTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json j{{"model", r.model}, {"status", r.ok ? "OK" : "FAILED"}};
    if (r.ok) {
      j["metrics"] = to_json(r.metrics);
      j["latency_ms"] = r.latency_ms;
    } else {
      j["error"] = r.error;
    }
    rows.push_back(std::move(j));
  }
  auto names = [&](const std::vector<std::size_t>& idx) {
    json a = json::array();
    for (auto i : idx) a.push_back(t.rows[i].model);
    return a;
  };
  return {{"rows", rows},
          {"best", {{"precision", names(t.best_precision)}, {"recall", names(t.best_recall)}, {"f1", names(t.best_f1)},
                    {"accuracy", names(t.best_accuracy)}, {"latency_ms", names(t.best_latency)}}}};
}

/// Aligned text table; '*' marks the best value in each column.
inline void write_text(std::ostream& out, const ComparisonTable& t) {
  auto mark = [](const std::vector<std::size_t>& best, std::size_t i) {
    return std::find(best.begin(), best.end(), i) != best.end() ? "*" : " ";
  };
  std::size_t w = 5;
  for (const auto& r : t.rows) w = std::max(w, r.model.size());
  out << std::left << std::setw(static_cast<int>(w + 2)) << "Model" << std::right << std::setw(9) << "Prec."
      << std::setw(9) << "Rec." << std::setw(9) << "F1" << std::setw(9) << "Acc." << std::setw(14) << "Latency(ms)"
      << '\n';
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out << std::left << std::setw(static_cast<int>(w + 2)) << r.model << std::right;
    if (!r.ok) {
      out << "  FAILED: " << r.error << '\n';
      continue;
    }
    out << std::fixed << std::setprecision(2) << std::setw(8) << r.metrics.precision << mark(t.best_precision, i)
        << std::setw(8) << r.metrics.recall << mark(t.best_recall, i) << std::setw(8) << r.metrics.f1
        << mark(t.best_f1, i) << std::setw(8) << r.metrics.accuracy << mark(t.best_accuracy, i) << std::setw(13)
        << r.latency_ms << mark(t.best_latency, i) << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

}  // namespace chatguard
