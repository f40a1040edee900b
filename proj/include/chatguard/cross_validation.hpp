#pragma once

#include <cmath>
#include <functional>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "chatguard/dataset.hpp"
#include "chatguard/metrics.hpp"
#include "chatguard/model_io.hpp"
#include "chatguard/random.hpp"

namespace chatguard {

struct Fold {
  std::size_t repeat = 0;  // 0-based
  std::size_t fold = 0;    // 0-based
  std::vector<std::size_t> test;  // sorted indices
};

struct FoldPlan {
  std::size_t n = 0;
  std::size_t splits = 5;
  std::size_t repeats = 3;
  std::uint64_t seed = 42;
  std::vector<Fold> folds;  // repeat-major, R * S entries

  std::vector<std::size_t> train_indices(const Fold& f) const {
    std::vector<char> in_test(n, 0);
    for (auto i : f.test) in_test[i] = 1;
    std::vector<std::size_t> out;
    out.reserve(n - f.test.size());
    for (std::size_t i = 0; i < n; ++i) if (!in_test[i]) out.push_back(i);
    return out;
  }
};

/// Repeated stratified k-fold. Each repeat shuffles every class with its own
/// derived seed and deals members round-robin across folds, continuing from
/// the fold where the previous class stopped, so per-fold class counts are
/// within one of proportional and fold sizes are within one of each other.
inline FoldPlan plan_folds(std::span<const Label> labels, std::size_t splits = 5, std::size_t repeats = 3,
                           std::uint64_t seed = 42) {
  if (splits < 2) throw Error(Errc::invalid_argument, "need at least 2 splits");
  if (repeats < 1) throw Error(Errc::invalid_argument, "need at least 1 repeat");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == Label::toxic].push_back(i);
  for (const auto& members : by_class) {
    if (!members.empty() && members.size() < splits) {
      throw Error(Errc::too_few_per_class, "a class has " + std::to_string(members.size()) + " examples, fewer than " +
                                               std::to_string(splits) + " splits");
    }
  }
  if (by_class[0].empty() && by_class[1].empty()) throw Error(Errc::too_few_per_class, "no examples to split");

  FoldPlan plan;
  plan.n = labels.size();
  plan.splits = splits;
  plan.repeats = repeats;
  plan.seed = seed;
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, r));
    std::vector<std::vector<std::size_t>> tests(splits);
    std::size_t cursor = 0;
    for (const auto& members : by_class) {
      auto shuffled = members;
      rng.shuffle(shuffled);
      for (auto i : shuffled) {
        tests[cursor].push_back(i);
        cursor = (cursor + 1) % splits;
      }
    }
    for (std::size_t f = 0; f < splits; ++f) {
      std::sort(tests[f].begin(), tests[f].end());
      plan.folds.push_back({r, f, std::move(tests[f])});
    }
  }
  return plan;
}

struct FoldResult {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  Metrics metrics;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over folds
};

struct EvalReport {
  std::string model_type;
  std::vector<FoldResult> folds;
  MetricSummary precision, recall, f1, accuracy;
  std::size_t splits = 0, repeats = 0;
  std::uint64_t seed = 0;
};

/// Fits a model on a training subset.
using Trainer = std::function<Model(const Dataset&)>;

namespace detail {
inline MetricSummary summarize(const std::vector<FoldResult>& folds, double Metrics::*field) {
  MetricSummary s;
  if (folds.empty()) return s;
  for (const auto& f : folds) s.mean += f.metrics.*field;
  s.mean /= static_cast<double>(folds.size());
  for (const auto& f : folds) s.stddev += (f.metrics.*field - s.mean) * (f.metrics.*field - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(folds.size()));
  return s;
}
}  // namespace detail

/// Trains on each fold's complement and scores its test set. Folds may run on
/// `threads` workers; results are independent of the worker count.
inline EvalReport cross_validate(const Dataset& data, const Trainer& trainer, const FoldPlan& plan,
                                 std::size_t threads = 1) {
  if (plan.n != data.size()) {
    throw Error(Errc::invalid_argument, "fold plan covers " + std::to_string(plan.n) + " examples, dataset has " +
                                            std::to_string(data.size()));
  }
  EvalReport report;
  report.splits = plan.splits;
  report.repeats = plan.repeats;
  report.seed = plan.seed;
  report.folds.resize(plan.folds.size());
  std::vector<std::string> errors(plan.folds.size());
  std::vector<std::string> types(plan.folds.size());

  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t k;
      {
        std::lock_guard lock(mu);
        if (next >= plan.folds.size()) return;
        k = next++;
      }
      const Fold& f = plan.folds[k];
      try {
        const auto train_idx = plan.train_indices(f);
        const Model model = trainer(data.subset(train_idx));
        std::vector<Label> pred, truth;
        for (auto i : f.test) {
          pred.push_back(predict(model, data.row(i)).label);
          truth.push_back(data.label(i));
        }
        report.folds[k] = {f.repeat, f.fold, compute_metrics(std::span<const Label>(pred), std::span<const Label>(truth)),
                           train_idx.size(), f.test.size()};
        types[k] = model_type(model);
      } catch (const std::exception& ex) {
        errors[k] = "repeat " + std::to_string(f.repeat + 1) + ", fold " + std::to_string(f.fold + 1) + ": " + ex.what();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, plan.folds.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k].empty()) throw Error(Errc::pipeline_failure, errors[k]);
  }
  report.model_type = types.empty() ? std::string{} : types.front();
  report.precision = detail::summarize(report.folds, &Metrics::precision);
  report.recall = detail::summarize(report.folds, &Metrics::recall);
  report.f1 = detail::summarize(report.folds, &Metrics::f1);
  report.accuracy = detail::summarize(report.folds, &Metrics::accuracy);
  return report;
}

inline json to_json(const EvalReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    json m = to_json(f.metrics);
    m["repeat"] = f.repeat + 1;
    m["fold"] = f.fold + 1;
    m["train_size"] = f.train_size;
    m["test_size"] = f.test_size;
    folds.push_back(std::move(m));
  }
  auto summary = [](const MetricSummary& s) { return json{{"mean", s.mean}, {"std", s.stddev}}; };
  return {{"model_type", r.model_type},
          {"protocol", {{"cross_validation", "repeated-stratified-kfold"}, {"n_splits", r.splits},
                        {"n_repeats", r.repeats}, {"total_evaluations", r.folds.size()}, {"seed", r.seed}}},
          {"folds", folds},
          {"summary", {{"precision", summary(r.precision)}, {"recall", summary(r.recall)},
                       {"f1", summary(r.f1)}, {"accuracy", summary(r.accuracy)}}}};
}

inline void write_text(std::ostream& out, const EvalReport& r) {
  out << "model: " << r.model_type << "  (" << r.repeats << " x " << r.splits << "-fold, seed " << r.seed << ")\n";
  out << std::left << std::setw(8) << "repeat" << std::setw(6) << "fold" << std::right << std::setw(10) << "precision"
      << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "accuracy" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& f : r.folds) {
    out << std::left << std::setw(8) << f.repeat + 1 << std::setw(6) << f.fold + 1 << std::right << std::setw(10)
        << f.metrics.precision << std::setw(10) << f.metrics.recall << std::setw(10) << f.metrics.f1 << std::setw(10)
        << f.metrics.accuracy << '\n';
  }
  out << std::left << std::setw(14) << "mean" << std::right << std::setw(10) << r.precision.mean << std::setw(10)
      << r.recall.mean << std::setw(10) << r.f1.mean << std::setw(10) << r.accuracy.mean << '\n';
  out << std::left << std::setw(14) << "std" << std::right << std::setw(10) << r.precision.stddev << std::setw(10)
      << r.recall.stddev << std::setw(10) << r.f1.stddev << std::setw(10) << r.accuracy.stddev << '\n';
  out.unsetf(std::ios::floatfield);
}

inline void write_csv(std::ostream& out, const EvalReport& r) {
  out << "repeat,fold,precision,recall,f1,accuracy,tp,fp,fn,tn\n";
  for (const auto& f : r.folds) {
    const auto& m = f.metrics;
    out << f.repeat + 1 << ',' << f.fold + 1 << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ','
        << m.accuracy << ',' << m.confusion.tp << ',' << m.confusion.fp << ',' << m.confusion.fn << ','
        << m.confusion.tn << '\n';
  }
}

}  // namespace chatguard
