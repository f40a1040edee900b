#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "chatguard/error.hpp"
#include "chatguard/message.hpp"
#include "chatguard/random.hpp"

namespace chatguard {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  bool operator==(const Confusion&) const = default;
};

/// TOXIC is the positive class. Zero denominators yield 0.
struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  Confusion confusion;
  std::size_t abstentions = 0;
};

inline Metrics metrics_from_confusion(const Confusion& c, std::size_t abstentions = 0) {
  Metrics m;
  m.confusion = c;
  m.abstentions = abstentions;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn),
               tn = static_cast<double>(c.tn);
  m.precision = c.tp + c.fp ? tp / (tp + fp) : 0.0;
  m.recall = c.tp + c.fn ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  const std::size_t total = c.tp + c.fp + c.fn + c.tn;
  m.accuracy = total ? (tp + tn) / static_cast<double>(total) : 0.0;
  return m;
}

/// Predictions may be absent (abstentions); those are excluded from every
/// denominator and counted separately.
inline Metrics compute_metrics(std::span<const std::optional<Label>> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size()) throw Error(Errc::length_mismatch, "predictions and labels differ in length");
  Confusion c;
  std::size_t abstain = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!predictions[i]) {
      ++abstain;
      continue;
    }
    const bool p = *predictions[i] == Label::toxic, t = labels[i] == Label::toxic;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  if (c.tp + c.fp + c.fn + c.tn == 0) throw Error(Errc::empty_input, "no scored predictions to evaluate");
  return metrics_from_confusion(c, abstain);
}

inline Metrics compute_metrics(std::span<const Label> predictions, std::span<const Label> labels) {
  std::vector<std::optional<Label>> p(predictions.begin(), predictions.end());
  return compute_metrics(std::span<const std::optional<Label>>(p), labels);
}

inline json to_json(const Metrics& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"accuracy", m.accuracy},
          {"tp", m.confusion.tp},
          {"fp", m.confusion.fp},
          {"fn", m.confusion.fn},
          {"tn", m.confusion.tn},
          {"abstentions", m.abstentions}};
}

// F1 from the indices of a resample; helper for the bootstrap.
namespace detail {
inline double resampled_f1(std::span<const Label> pred, std::span<const Label> labels,
                           std::span<const std::size_t> idx) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (auto i : idx) {
    const bool p = pred[i] == Label::toxic, t = labels[i] == Label::toxic;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
}
}  // namespace detail

struct BootstrapResult {
  double p_value = 1.0;
  double observed_delta = 0.0;  // F1(a) - F1(b)
  std::size_t iterations = 0;
};

/// Paired bootstrap over message indices for the F1 difference. Two-sided
/// p-value from the centered bootstrap distribution:
/// p = (1 + #{|delta*_b - delta| >= |delta|}) / (B + 1).
inline BootstrapResult paired_bootstrap(std::span<const Label> pred_a, std::span<const Label> pred_b,
                                        std::span<const Label> labels, std::size_t iterations = 10000,
                                        std::uint64_t seed = 42) {
  if (pred_a.size() != labels.size() || pred_b.size() != labels.size()) {
    throw Error(Errc::length_mismatch, "paired bootstrap needs aligned prediction vectors");
  }
  if (labels.empty()) throw Error(Errc::empty_input, "paired bootstrap on empty input");
  const std::size_t n = labels.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  BootstrapResult r;
  r.iterations = iterations;
  r.observed_delta = detail::resampled_f1(pred_a, labels, all) - detail::resampled_f1(pred_b, labels, all);
  const double abs_obs = std::abs(r.observed_delta);
  Rng rng(seed);
  std::vector<std::size_t> idx(n);
  std::size_t extreme = 0;
  for (std::size_t b = 0; b < iterations; ++b) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
    const double delta = detail::resampled_f1(pred_a, labels, idx) - detail::resampled_f1(pred_b, labels, idx);
    if (std::abs(delta - r.observed_delta) >= abs_obs) ++extreme;
  }
  r.p_value = static_cast<double>(1 + extreme) / static_cast<double>(iterations + 1);
  return r;
}

/// Strict majority over an odd number of annotators.
inline Label majority_vote(std::span<const Label> annotations) {
  if (annotations.empty() || annotations.size() % 2 == 0) {
    throw Error(Errc::even_annotator_count, "majority vote needs an odd number of annotators, got " +
                                                std::to_string(annotations.size()));
  }
  std::size_t toxic = 0;
  for (auto l : annotations) toxic += (l == Label::toxic);
  return 2 * toxic > annotations.size() ? Label::toxic : Label::non_toxic;
}

}  // namespace chatguard
