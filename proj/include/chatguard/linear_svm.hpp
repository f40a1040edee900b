#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "chatguard/dataset.hpp"
#include "chatguard/random.hpp"

namespace chatguard {

struct LinearSvmConfig {
  double C = 1.0;
  std::size_t max_iter = 5000;  // epochs
  double tol = 1e-4;
  std::uint64_t seed = 42;
  bool zero_to_toxic = true;  // decision value exactly 0 maps to TOXIC

  bool operator==(const LinearSvmConfig&) const = default;
};

/// Linear SVM over standardized features. `weights` and `bias` act on
/// (x - mean) / scale.
struct LinearSvmModel {
  LinearSvmConfig config;
  std::size_t feature_dim = 0;
  ClassWeights class_weights;
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t epochs_run = 0;
  bool converged = false;

  double decision(std::span<const double> x) const {
    if (x.size() != feature_dim) {
      throw Error(Errc::dimension_mismatch, "vector has " + std::to_string(x.size()) + " features, model expects " +
                                                std::to_string(feature_dim));
    }
    double s = bias;
    for (std::size_t j = 0; j < feature_dim; ++j) s += weights[j] * ((x[j] - mean[j]) / scale[j]);
    return s;
  }

  Prediction predict(std::span<const double> x) const {
    const double s = decision(x);
    const bool toxic = s > 0.0 || (s == 0.0 && config.zero_to_toxic);
    return {toxic ? Label::toxic : Label::non_toxic, s};
  }

  /// A model over raw features with no standardization.
  static LinearSvmModel from_weights(std::vector<double> w, double b) {
    LinearSvmModel m;
    m.feature_dim = w.size();
    m.mean.assign(w.size(), 0.0);
    m.scale.assign(w.size(), 1.0);
    m.weights = std::move(w);
    m.bias = b;
    return m;
  }
};

/// Minimizes sum_i c_{y_i} * hinge(y_i (w.x_i + b)) + ||(w, b)||^2 / (2C) by
/// epoch-shuffled stochastic subgradient steps with eta_t = 1 / (lambda t),
/// lambda = 1 / (C N). The bias is an extra constant feature and is
/// regularized with w. The returned parameters are the running average of the
/// iterates from the second epoch on; training stops once an epoch changes
/// that average by less than tol (relative to max(1, ||avg||)) or after
/// max_iter epochs.
inline LinearSvmModel train_svm(const Dataset& data, const LinearSvmConfig& config = {}) {
  if (data.empty()) throw Error(Errc::empty_input, "cannot train on an empty dataset");
  data.require_both_classes();
  if (!(config.C > 0.0)) throw Error(Errc::invalid_argument, "C must be positive");

  const std::size_t n = data.size(), d = data.dim();
  LinearSvmModel model;
  model.config = config;
  model.feature_dim = d;
  model.class_weights = balanced_weights(data.labels());
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += r[j];
  }
  for (auto& m : model.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - model.mean[j];
      model.scale[j] += c * c;
    }
  }
  for (auto& s : model.scale) {
    const double var = (s - 1.0) / static_cast<double>(n);
    s = var > 1e-24 ? std::sqrt(var) : 1.0;
  }

  // Standardized design matrix with a trailing constant column.
  const std::size_t da = d + 1;
  std::vector<double> z(n * da);
  std::vector<double> y(n), cw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < d; ++j) z[i * da + j] = (r[j] - model.mean[j]) / model.scale[j];
    z[i * da + d] = 1.0;
    y[i] = data.label(i) == Label::toxic ? 1.0 : -1.0;
    cw[i] = model.class_weights.of(data.label(i));
  }

  const double lambda = 1.0 / (config.C * static_cast<double>(n));
  std::vector<double> w(da, 0.0), avg(da, 0.0), prev(da, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);
  std::uint64_t t = 0, averaged = 0;

  for (std::size_t epoch = 1; epoch <= config.max_iter; ++epoch) {
    rng.shuffle(order);
    prev = avg;
    for (auto i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double* zi = z.data() + i * da;
      double margin = 0.0;
      for (std::size_t j = 0; j < da; ++j) margin += w[j] * zi[j];
      margin *= y[i];
      const double shrink = 1.0 - eta * lambda;
      for (auto& wj : w) wj *= shrink;
      if (margin < 1.0) {
        const double step = eta * cw[i] * y[i];
        for (std::size_t j = 0; j < da; ++j) w[j] += step * zi[j];
      }
      if (epoch >= 2) {
        ++averaged;
        const double a = 1.0 / static_cast<double>(averaged);
        for (std::size_t j = 0; j < da; ++j) avg[j] += a * (w[j] - avg[j]);
      }
    }
    model.epochs_run = epoch;
    if (epoch >= 3) {
      double diff = 0.0, norm = 0.0;
      for (std::size_t j = 0; j < da; ++j) {
        diff += (avg[j] - prev[j]) * (avg[j] - prev[j]);
        norm += avg[j] * avg[j];
      }
      if (std::sqrt(diff) < config.tol * std::max(1.0, std::sqrt(norm))) {
        model.converged = true;
        break;
      }
    }
  }
  const auto& final_w = averaged > 0 ? avg : w;
  model.weights.assign(final_w.begin(), final_w.begin() + static_cast<std::ptrdiff_t>(d));
  model.bias = final_w[d];
  return model;
}

}  // namespace chatguard
