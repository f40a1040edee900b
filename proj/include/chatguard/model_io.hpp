#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "chatguard/linear_svm.hpp"
#include "chatguard/random_forest.hpp"

namespace chatguard {

using Model = std::variant<RandomForestModel, LinearSvmModel>;

inline constexpr int model_format_version = 1;

inline Prediction predict(const Model& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

inline std::size_t feature_dim(const Model& model) {
  return std::visit([](const auto& m) { return m.feature_dim; }, model);
}

inline std::string model_type(const Model& model) {
  return std::holds_alternative<RandomForestModel>(model) ? "random_forest" : "linear_svm";
}

inline json to_json(const Model& model) {
  json j;
  j["format_version"] = model_format_version;
  j["model_type"] = model_type(model);
  j["d"] = feature_dim(model);
  if (const auto* rf = std::get_if<RandomForestModel>(&model)) {
    const auto& c = rf->config;
    j["seed"] = c.seed;
    j["config"] = {{"n_estimators", c.n_estimators},
                   {"max_depth", c.max_depth},
                   {"min_samples_leaf", c.min_samples_leaf},
                   {"max_features", c.max_features},
                   {"ties_to_toxic", c.ties_to_toxic},
                   {"class_weight", "balanced"}};
    j["class_weights"] = {{"non_toxic", rf->class_weights.non_toxic}, {"toxic", rf->class_weights.toxic}};
    j["degenerate"] = rf->degenerate;
    json trees = json::array();
    for (const auto& t : rf->trees) {
      json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
           value = json::array();
      for (const auto& n : t.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.toxic_fraction);
      }
      trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
    }
    j["trees"] = std::move(trees);
  } else {
    const auto& svm = std::get<LinearSvmModel>(model);
    const auto& c = svm.config;
    j["seed"] = c.seed;
    j["config"] = {{"C", c.C},
                   {"max_iter", c.max_iter},
                   {"tol", c.tol},
                   {"zero_to_toxic", c.zero_to_toxic},
                   {"class_weight", "balanced"},
                   {"solver", "averaged-subgradient"}};
    j["class_weights"] = {{"non_toxic", svm.class_weights.non_toxic}, {"toxic", svm.class_weights.toxic}};
    j["mean"] = svm.mean;
    j["scale"] = svm.scale;
    j["weights"] = svm.weights;
    j["bias"] = svm.bias;
    j["epochs_run"] = svm.epochs_run;
    j["converged"] = svm.converged;
  }
  return j;
}

inline Model model_from_json(const json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != model_format_version) {
      throw Error(Errc::version_mismatch, "model format version " + std::to_string(version) + " is not supported (expected " +
                                              std::to_string(model_format_version) + ")");
    }
    const std::string type = j.at("model_type").get<std::string>();
    const auto d = j.at("d").get<std::size_t>();
    const auto& cfg = j.at("config");
    if (type == "random_forest") {
      RandomForestModel m;
      m.feature_dim = d;
      m.config.seed = j.at("seed").get<std::uint64_t>();
      m.config.n_estimators = cfg.at("n_estimators").get<std::size_t>();
      m.config.max_depth = cfg.at("max_depth").get<std::size_t>();
      m.config.min_samples_leaf = cfg.at("min_samples_leaf").get<std::size_t>();
      m.config.max_features = cfg.at("max_features").get<std::size_t>();
      m.config.ties_to_toxic = cfg.at("ties_to_toxic").get<bool>();
      m.class_weights = {j.at("class_weights").at("non_toxic").get<double>(),
                         j.at("class_weights").at("toxic").get<double>()};
      m.degenerate = j.value("degenerate", false);
      for (const auto& tj : j.at("trees")) {
        const auto feature = tj.at("feature").get<std::vector<std::int32_t>>();
        const auto threshold = tj.at("threshold").get<std::vector<double>>();
        const auto left = tj.at("left").get<std::vector<std::int32_t>>();
        const auto right = tj.at("right").get<std::vector<std::int32_t>>();
        const auto value = tj.at("value").get<std::vector<double>>();
        const std::size_t nn = feature.size();
        if (nn == 0 || threshold.size() != nn || left.size() != nn || right.size() != nn || value.size() != nn) {
          throw Error(Errc::corrupt_file, "tree arrays have inconsistent lengths");
        }
        DecisionTree t;
        t.nodes.resize(nn);
        for (std::size_t i = 0; i < nn; ++i) {
          auto& n = t.nodes[i];
          n = {feature[i], threshold[i], left[i], right[i], value[i]};
          if (n.feature >= 0) {
            const auto ok = [&](std::int32_t c) { return c > static_cast<std::int32_t>(i) && static_cast<std::size_t>(c) < nn; };
            if (static_cast<std::size_t>(n.feature) >= d || !ok(n.left) || !ok(n.right)) {
              throw Error(Errc::corrupt_file, "tree node " + std::to_string(i) + " is invalid");
            }
          }
        }
        m.trees.push_back(std::move(t));
      }
      if (m.trees.size() != m.config.n_estimators) throw Error(Errc::corrupt_file, "tree count does not match n_estimators");
      return m;
    }
    if (type == "linear_svm") {
      LinearSvmModel m;
      m.feature_dim = d;
      m.config.seed = j.at("seed").get<std::uint64_t>();
      m.config.C = cfg.at("C").get<double>();
      m.config.max_iter = cfg.at("max_iter").get<std::size_t>();
      m.config.tol = cfg.at("tol").get<double>();
      m.config.zero_to_toxic = cfg.at("zero_to_toxic").get<bool>();
      m.class_weights = {j.at("class_weights").at("non_toxic").get<double>(),
                         j.at("class_weights").at("toxic").get<double>()};
      m.mean = j.at("mean").get<std::vector<double>>();
      m.scale = j.at("scale").get<std::vector<double>>();
      m.weights = j.at("weights").get<std::vector<double>>();
      m.bias = j.at("bias").get<double>();
      m.epochs_run = j.value("epochs_run", std::size_t{0});
      m.converged = j.value("converged", false);
      if (m.mean.size() != d || m.scale.size() != d || m.weights.size() != d) {
        throw Error(Errc::corrupt_file, "SVM parameter lengths do not match d");
      }
      return m;
    }
    throw Error(Errc::corrupt_file, "unknown model type '" + type + "'");
  } catch (const json::exception& ex) {
    throw Error(Errc::corrupt_file, std::string("bad model file: ") + ex.what());
  }
}

inline std::string serialize_model(const Model& model) { return to_json(model).dump(); }

inline void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::file_unreadable, "cannot write model file: " + path);
  out << serialize_model(model) << '\n';
  if (!out) throw Error(Errc::file_unreadable, "write failed for model file: " + path);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_unreadable, "cannot open model file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::corrupt_file, "model file is truncated or not JSON: " + path);
  return model_from_json(j);
}

}  // namespace chatguard
