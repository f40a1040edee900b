#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatguard/embedding.hpp"
#include "chatguard/error.hpp"
#include "chatguard/message.hpp"

namespace chatguard {

struct Prediction {
  Label label = Label::non_toxic;
  double score = 0.0;
};

/// Labeled feature vectors of uniform length, stored row-major.
class Dataset {
 public:
  explicit Dataset(std::size_t d = 0) : d_(d) {}

  void add(std::string id, std::span<const double> x, Label y) {
    if (d_ == 0 && ids_.empty()) d_ = x.size();
    if (x.size() != d_) {
      throw Error(Errc::dimension_mismatch, "example '" + id + "' has " + std::to_string(x.size()) +
                                                " features, dataset has " + std::to_string(d_));
    }
    for (double v : x) {
      if (!std::isfinite(v)) throw Error(Errc::non_finite_value, "example '" + id + "' has a non-finite feature");
    }
    ids_.push_back(std::move(id));
    values_.insert(values_.end(), x.begin(), x.end());
    labels_.push_back(y);
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return d_; }
  bool empty() const { return labels_.empty(); }

  std::span<const double> row(std::size_t i) const { return {values_.data() + i * d_, d_}; }
  Label label(std::size_t i) const { return labels_[i]; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::vector<Label>& labels() const { return labels_; }

  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (auto x : labels_) n += (x == l);
    return n;
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out(d_);
    for (auto i : indices) out.add(ids_[i], row(i), labels_[i]);
    return out;
  }

  /// Throws MissingClass unless both labels are present.
  void require_both_classes() const {
    if (count(Label::toxic) == 0 || count(Label::non_toxic) == 0) {
      throw Error(Errc::missing_class, "training data needs at least one TOXIC and one NON_TOXIC example");
    }
  }

 private:
  std::size_t d_;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::vector<Label> labels_;
};

/// Builds a dataset from labeled cache records, optionally filtered by
/// strategy and provider. Unlabeled records are skipped.
inline Dataset dataset_from_cache(const std::vector<CacheRecord>& records, std::optional<Strategy> strategy = {},
                                  const std::string& provider = {}) {
  Dataset ds;
  for (const auto& r : records) {
    if (!r.label) continue;
    if (strategy && r.strategy != *strategy) continue;
    if (!provider.empty() && r.provider != provider) continue;
    ds.add(r.id, r.vector, *r.label);
  }
  return ds;
}

struct ClassWeights {
  double non_toxic = 1.0;
  double toxic = 1.0;

  double of(Label l) const { return l == Label::toxic ? toxic : non_toxic; }
  bool operator==(const ClassWeights&) const = default;
};

/// w_c = N / (K * n_c) with K = 2.
inline ClassWeights balanced_weights(std::span<const Label> labels) {
  std::size_t n_tox = 0;
  for (auto l : labels) n_tox += (l == Label::toxic);
  const std::size_t n = labels.size();
  const std::size_t n_non = n - n_tox;
  if (n_tox == 0 || n_non == 0) throw Error(Errc::missing_class, "balanced weights need both classes present");
  const double nd = static_cast<double>(n);
  return {nd / (2.0 * static_cast<double>(n_non)), nd / (2.0 * static_cast<double>(n_tox))};
}

}  // namespace chatguard
