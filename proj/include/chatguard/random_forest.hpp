#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "chatguard/dataset.hpp"
#include "chatguard/random.hpp"

namespace chatguard {

struct RandomForestConfig {
  std::size_t n_estimators = 100;
  std::uint64_t seed = 42;
  std::size_t max_depth = 0;         // 0 = unbounded
  std::size_t min_samples_leaf = 1;
  std::size_t max_features = 0;      // 0 = floor(sqrt(d))
  bool ties_to_toxic = true;

  bool operator==(const RandomForestConfig&) const = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double toxic_fraction = 0.0;  // class-weighted toxic share at this node
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double toxic_fraction(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].toxic_fraction;
  }
};

struct RandomForestModel {
  RandomForestConfig config;
  std::size_t feature_dim = 0;
  ClassWeights class_weights;
  std::vector<DecisionTree> trees;
  bool degenerate = false;  // some tree could not split an impure root

  /// Soft vote: score is the mean class-weighted toxic fraction over trees.
  Prediction predict(std::span<const double> x) const {
    if (x.size() != feature_dim) {
      throw Error(Errc::dimension_mismatch, "vector has " + std::to_string(x.size()) + " features, model expects " +
                                                std::to_string(feature_dim));
    }
    double sum = 0.0;
    for (const auto& t : trees) sum += t.toxic_fraction(x);
    const double score = trees.empty() ? 0.0 : sum / static_cast<double>(trees.size());
    const bool toxic = score > 0.5 || (score == 0.5 && config.ties_to_toxic);
    return {toxic ? Label::toxic : Label::non_toxic, score};
  }
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<double>& columns, std::size_t n_rows, std::size_t d, const std::vector<Label>& labels,
              const ClassWeights& cw, const RandomForestConfig& cfg)
      : cols_(columns), n_rows_(n_rows), d_(d), labels_(labels), cw_(cw), cfg_(cfg) {
    max_features_ = cfg.max_features ? cfg.max_features
                                     : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    max_features_ = std::min(max_features_, d);
  }

  // Fits one tree on a bootstrap resample drawn from `rng`.
  DecisionTree build(Rng& rng, bool& degenerate_root) {
    std::vector<std::uint32_t> multiplicity(n_rows_, 0);
    for (std::size_t i = 0; i < n_rows_; ++i) ++multiplicity[rng.below(n_rows_)];
    std::vector<std::uint32_t> samples;
    weight_.assign(n_rows_, 0.0);
    for (std::size_t i = 0; i < n_rows_; ++i) {
      if (multiplicity[i] == 0) continue;
      samples.push_back(static_cast<std::uint32_t>(i));
      weight_[i] = multiplicity[i] * cw_.of(labels_[i]);
    }

    DecisionTree tree;
    struct Task {
      std::size_t node, begin, end, depth;
    };
    tree.nodes.emplace_back();
    std::vector<Task> stack{{0, 0, samples.size(), 0}};
    std::vector<std::uint32_t> features(d_);
    degenerate_root = false;

    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();
      const std::span<std::uint32_t> idx(samples.data() + task.begin, task.end - task.begin);
      double w_tox = 0.0, w_non = 0.0;
      for (auto i : idx) (labels_[i] == Label::toxic ? w_tox : w_non) += weight_[i];
      tree.nodes[task.node].toxic_fraction = w_tox / (w_tox + w_non);

      const bool pure = w_tox == 0.0 || w_non == 0.0;
      const bool depth_capped = cfg_.max_depth != 0 && task.depth >= cfg_.max_depth;
      if (pure || depth_capped || idx.size() < 2 * cfg_.min_samples_leaf) continue;

      const auto split = find_split(idx, w_tox, w_non, rng, features);
      if (!split) {
        if (task.node == 0) degenerate_root = true;
        continue;
      }
      const auto mid = std::partition(idx.begin(), idx.end(), [&](std::uint32_t i) {
        return value(split->feature, i) <= split->threshold;
      });
      const std::size_t n_left = static_cast<std::size_t>(mid - idx.begin());

      const auto left = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      const auto right = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      auto& n = tree.nodes[task.node];
      n.feature = static_cast<std::int32_t>(split->feature);
      n.threshold = split->threshold;
      n.left = left;
      n.right = right;
      stack.push_back({static_cast<std::size_t>(right), task.begin + n_left, task.end, task.depth + 1});
      stack.push_back({static_cast<std::size_t>(left), task.begin, task.begin + n_left, task.depth + 1});
    }
    return tree;
  }

 private:
  struct Split {
    std::size_t feature;
    double threshold;
  };

  double value(std::size_t f, std::size_t i) const { return cols_[f * n_rows_ + i]; }

  // Draws features without replacement until max_features non-constant ones
  // have been scored (more are drawn if needed); returns the split with the
  // lowest weighted child Gini impurity.
  std::optional<Split> find_split(std::span<const std::uint32_t> idx, double w_tox, double w_non, Rng& rng,
                                  std::vector<std::uint32_t>& features) {
    std::iota(features.begin(), features.end(), 0u);
    std::optional<Split> best;
    double best_score = std::numeric_limits<double>::infinity();
    std::size_t scored = 0;
    const double w_total = w_tox + w_non;
    const std::size_t min_leaf = std::max<std::size_t>(1, cfg_.min_samples_leaf);
    std::vector<std::pair<double, std::uint32_t>>& vals = scratch_;

    for (std::size_t k = 0; k < d_ && scored < max_features_; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.below(d_ - k));
      std::swap(features[k], features[j]);
      const std::size_t f = features[k];

      vals.clear();
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (auto i : idx) {
        const double v = value(f, i);
        vals.emplace_back(v, i);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;
      ++scored;
      std::sort(vals.begin(), vals.end());

      double lt = 0.0, ln = 0.0;
      for (std::size_t p = 0; p + 1 < vals.size(); ++p) {
        const auto i = vals[p].second;
        (labels_[i] == Label::toxic ? lt : ln) += weight_[i];
        if (vals[p].first == vals[p + 1].first) continue;
        if (p + 1 < min_leaf || vals.size() - (p + 1) < min_leaf) continue;
        const double lw = lt + ln;
        const double rt = w_tox - lt, rn = w_non - ln, rw = w_total - lw;
        const double gini_l = 1.0 - (lt * lt + ln * ln) / (lw * lw);
        const double gini_r = 1.0 - (rt * rt + rn * rn) / (rw * rw);
        const double score = lw * gini_l + rw * gini_r;
        if (score < best_score) {
          best_score = score;
          double thr = 0.5 * (vals[p].first + vals[p + 1].first);
          if (!(thr < vals[p + 1].first)) thr = vals[p].first;
          best = Split{f, thr};
        }
      }
    }
    return best;
  }

  const std::vector<double>& cols_;
  std::size_t n_rows_;
  std::size_t d_;
  const std::vector<Label>& labels_;
  ClassWeights cw_;
  const RandomForestConfig& cfg_;
  std::size_t max_features_ = 1;
  std::vector<double> weight_;
  std::vector<std::pair<double, std::uint32_t>> scratch_;
};

}  // namespace detail

/// Bootstrap-aggregated Gini trees with balanced class weights and
/// sqrt(d) feature subsampling. Tree t uses seed derive_seed(config.seed, t),
/// so the result does not depend on `threads`.
inline RandomForestModel train_rf(const Dataset& data, const RandomForestConfig& config = {}, std::size_t threads = 0) {
  if (data.empty()) throw Error(Errc::empty_input, "cannot train on an empty dataset");
  data.require_both_classes();
  if (config.n_estimators == 0) throw Error(Errc::invalid_argument, "n_estimators must be positive");

  const std::size_t n = data.size(), d = data.dim();
  std::vector<double> columns(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t f = 0; f < d; ++f) columns[f * n + i] = r[f];
  }

  RandomForestModel model;
  model.config = config;
  model.feature_dim = d;
  model.class_weights = balanced_weights(data.labels());
  model.trees.resize(config.n_estimators);
  std::vector<char> degenerate(config.n_estimators, 0);

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, config.n_estimators);
  auto work = [&](std::size_t worker) {
    detail::TreeBuilder builder(columns, n, d, data.labels(), model.class_weights, config);
    for (std::size_t t = worker; t < config.n_estimators; t += threads) {
      Rng rng(derive_seed(config.seed, t));
      bool deg = false;
      model.trees[t] = builder.build(rng, deg);
      degenerate[t] = deg;
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  model.degenerate = std::any_of(degenerate.begin(), degenerate.end(), [](char c) { return c != 0; });
  return model;
}

}  // namespace chatguard
