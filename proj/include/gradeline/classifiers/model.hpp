#pragma once

// A trained first-layer classifier of any of the four kinds, plus the
// versioned JSON model file. Schema (format "gradeline-model", version 1):
//
//   { "format": "gradeline-model", "version": 1,
//     "algorithm": "knn" | "nb" | "rf" | "svm",
//     "variant": "A" | "B", "dims": 258 | 2,
//     "lbp_order": "top-left-clockwise",
//     "standardizer": null | { "mean": [...], "scale": [...] },
//     "params": { algorithm hyper-parameters },
//     "model": { algorithm state } }

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/classifiers/dataset.hpp"
#include "gradeline/classifiers/forest.hpp"
#include "gradeline/classifiers/knn.hpp"
#include "gradeline/classifiers/naive_bayes.hpp"
#include "gradeline/classifiers/svm.hpp"
#include "gradeline/error.hpp"
#include "gradeline/features.hpp"

namespace gradeline {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "gradeline-model";

enum class Algorithm { Knn, Nb, Rf, Svm };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Knn: return "knn";
    case Algorithm::Nb: return "nb";
    case Algorithm::Rf: return "rf";
    case Algorithm::Svm: return "svm";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "knn") return Algorithm::Knn;
  if (s == "nb") return Algorithm::Nb;
  if (s == "rf") return Algorithm::Rf;
  if (s == "svm") return Algorithm::Svm;
  throw InvalidArgument("unknown algorithm '" + std::string(s) + "'");
}

// Per-dimension z-scoring; constant dimensions get scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const LabeledDataset& ds) {
    Standardizer s;
    s.mean.assign(ds.dim(), 0.0);
    s.scale.assign(ds.dim(), 0.0);
    for (const auto& r : ds.rows()) {
      for (std::size_t d = 0; d < ds.dim(); ++d) s.mean[d] += r[d];
    }
    for (auto& m : s.mean) m /= static_cast<double>(ds.size());
    for (const auto& r : ds.rows()) {
      for (std::size_t d = 0; d < ds.dim(); ++d) s.scale[d] += (r[d] - s.mean[d]) * (r[d] - s.mean[d]);
    }
    for (auto& v : s.scale) {
      v = std::sqrt(v / static_cast<double>(ds.size()));
      if (v <= 0.0) v = 1.0;
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) out[d] = (x[d] - mean[d]) / scale[d];
    return out;
  }

  LabeledDataset apply(const LabeledDataset& ds) const {
    LabeledDataset out = LabeledDataset::raw(ds.dim());
    for (std::size_t i = 0; i < ds.size(); ++i) out.add(apply(ds.row(i)), ds.label(i));
    return out;
  }
};

struct TrainOptions {
  Algorithm algorithm = Algorithm::Svm;
  std::size_t knn_k = 3;
  DistanceMetric knn_metric = DistanceMetric::Euclidean;
  ForestOptions forest{};
  SvmOptions svm{};
  bool standardize = false;
};

class Classifier {
 public:
  using Model = std::variant<KnnModel, NbModel, ForestModel, SvmModel>;

  Classifier(Model model, FeatureVariant variant, std::optional<Standardizer> standardizer = std::nullopt)
      : model_(std::move(model)), variant_(variant), standardizer_(std::move(standardizer)) {}

  Algorithm algorithm() const noexcept { return static_cast<Algorithm>(model_.index()); }
  FeatureVariant variant() const noexcept { return variant_; }
  const Model& model() const noexcept { return model_; }
  const std::optional<Standardizer>& standardizer() const noexcept { return standardizer_; }

  Label predict(std::span<const double> x) const {
    if (standardizer_) {
      const auto z = standardizer_->apply(x);
      return predict_raw(z);
    }
    return predict_raw(x);
  }

  Label predict(const FeatureVector& fv) const {
    if (fv.variant != variant_) throw InvalidArgument("feature variant does not match the model");
    return predict(std::span<const double>(fv.values));
  }

 private:
  Label predict_raw(std::span<const double> x) const {
    return std::visit(
        [&](const auto& m) -> Label {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, KnnModel>) return knn_predict(m, x);
          else if constexpr (std::is_same_v<T, NbModel>) return nb_predict(m, x);
          else if constexpr (std::is_same_v<T, ForestModel>) return rf_predict(m, x);
          else return svm_predict(m, x);
        },
        model_);
  }

  Model model_;
  FeatureVariant variant_;
  std::optional<Standardizer> standardizer_;
};

inline Classifier train_classifier(const LabeledDataset& ds, const TrainOptions& opt) {
  std::optional<Standardizer> st;
  const LabeledDataset* data = &ds;
  LabeledDataset scaled;
  if (opt.standardize) {
    st = Standardizer::fit(ds);
    scaled = st->apply(ds);
    data = &scaled;
  }
  switch (opt.algorithm) {
    case Algorithm::Knn: return Classifier(knn_train(*data, opt.knn_k, opt.knn_metric), ds.variant(), st);
    case Algorithm::Nb: return Classifier(nb_train(*data), ds.variant(), st);
    case Algorithm::Rf: return Classifier(rf_train(*data, opt.forest), ds.variant(), st);
    case Algorithm::Svm: return Classifier(svm_train(*data, opt.svm), ds.variant(), st);
  }
  throw InvalidArgument("unknown algorithm");
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

using nlohmann::json;

inline json labels_to_json(const std::vector<Label>& labels) {
  json a = json::array();
  for (auto l : labels) a.push_back(to_string(l));
  return a;
}

inline std::vector<Label> labels_from_json(const json& j) {
  std::vector<Label> out;
  for (const auto& v : j) out.push_back(parse_label(v.get<std::string>()));
  return out;
}

inline void model_to_json(const KnnModel& m, json& params, json& body) {
  params = {{"k", m.k}, {"metric", to_string(m.metric)}};
  body = {{"samples", m.samples}, {"labels", labels_to_json(m.labels)}};
}

inline void model_to_json(const NbModel& m, json& params, json& body) {
  params = json::object({{"variance_floor", kNbVarianceFloor}, {"likelihood", "gaussian"}});
  json classes = json::array();
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (m.means[c].empty()) continue;
    classes.push_back({{"label", to_string(label_from_index(c))},
                       {"prior", m.priors[c]},
                       {"mean", m.means[c]},
                       {"variance", m.variances[c]}});
  }
  body = {{"classes", classes}};
}

inline void model_to_json(const ForestModel& m, json& params, json& body) {
  params = {{"trees", m.trees.size()}};
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.counts});
    }
    trees.push_back(nodes);
  }
  body = {{"trees", trees}};
}

inline void model_to_json(const SvmModel& m, json& params, json& body) {
  params = {{"kernel", "rbf"}, {"g", m.gamma}, {"C", m.C}, {"tol", m.tol}, {"decomposition", "one-vs-one"}};
  json machines = json::array();
  for (const auto& mc : m.machines) {
    machines.push_back({{"positive", to_string(mc.positive)},
                        {"negative", to_string(mc.negative)},
                        {"rho", mc.rho},
                        {"alpha", mc.alpha},
                        {"y", mc.y},
                        {"support_vectors", mc.support_vectors},
                        {"iterations", mc.iterations},
                        {"converged", mc.converged}});
  }
  body = {{"machines", machines}};
}

inline std::vector<std::vector<double>> rows_from_json(const json& j, std::size_t dims) {
  auto rows = j.get<std::vector<std::vector<double>>>();
  for (const auto& r : rows) {
    if (r.size() != dims) throw FormatError("corrupt model: row dimension mismatch");
  }
  return rows;
}

inline Classifier::Model model_from_json(Algorithm a, std::size_t dims, const json& params, const json& body) {
  switch (a) {
    case Algorithm::Knn: {
      KnnModel m;
      m.k = params.at("k").get<std::size_t>();
      m.metric = parse_metric(params.at("metric").get<std::string>());
      m.dim = dims;
      m.samples = rows_from_json(body.at("samples"), dims);
      m.labels = labels_from_json(body.at("labels"));
      if (m.samples.size() != m.labels.size() || m.k == 0 || m.k > m.samples.size()) {
        throw FormatError("corrupt model: inconsistent knn state");
      }
      return m;
    }
    case Algorithm::Nb: {
      NbModel m;
      m.dim = dims;
      for (const auto& c : body.at("classes")) {
        const auto idx = label_index(parse_label(c.at("label").get<std::string>()));
        m.priors[idx] = c.at("prior").get<double>();
        m.means[idx] = c.at("mean").get<std::vector<double>>();
        m.variances[idx] = c.at("variance").get<std::vector<double>>();
        if (m.means[idx].size() != dims || m.variances[idx].size() != dims) {
          throw FormatError("corrupt model: naive bayes dimension mismatch");
        }
      }
      return m;
    }
    case Algorithm::Rf: {
      ForestModel m;
      m.dim = dims;
      for (const auto& t : body.at("trees")) {
        DecisionTree tree;
        for (const auto& n : t) {
          TreeNode node;
          node.feature = n.at(0).get<int>();
          node.threshold = n.at(1).get<double>();
          node.left = n.at(2).get<int>();
          node.right = n.at(3).get<int>();
          node.counts = n.at(4).get<ClassCounts>();
          tree.nodes.push_back(node);
        }
        const auto size = static_cast<int>(tree.nodes.size());
        for (const auto& node : tree.nodes) {
          if (!node.is_leaf() && (node.feature >= static_cast<int>(dims) || node.left <= 0 ||
                                  node.right <= 0 || node.left >= size || node.right >= size)) {
            throw FormatError("corrupt model: bad tree node");
          }
        }
        if (tree.nodes.empty()) throw FormatError("corrupt model: empty tree");
        m.trees.push_back(std::move(tree));
      }
      return m;
    }
    case Algorithm::Svm: {
      SvmModel m;
      m.dim = dims;
      m.gamma = params.at("g").get<double>();
      m.C = params.at("C").get<double>();
      m.tol = params.at("tol").get<double>();
      for (const auto& j : body.at("machines")) {
        SvmMachine mc;
        mc.positive = parse_label(j.at("positive").get<std::string>());
        mc.negative = parse_label(j.at("negative").get<std::string>());
        mc.rho = j.at("rho").get<double>();
        mc.alpha = j.at("alpha").get<std::vector<double>>();
        mc.y = j.at("y").get<std::vector<int>>();
        mc.support_vectors = rows_from_json(j.at("support_vectors"), dims);
        mc.iterations = j.value("iterations", std::size_t{0});
        mc.converged = j.value("converged", true);
        if (mc.alpha.size() != mc.y.size() || mc.alpha.size() != mc.support_vectors.size()) {
          throw FormatError("corrupt model: inconsistent svm machine");
        }
        m.machines.push_back(std::move(mc));
      }
      if (m.machines.empty()) throw FormatError("corrupt model: svm without machines");
      return m;
    }
  }
  throw FormatError("corrupt model: unknown algorithm");
}

}  // namespace detail

inline nlohmann::json classifier_to_json(const Classifier& c) {
  nlohmann::json params;
  nlohmann::json body;
  std::visit([&](const auto& m) { detail::model_to_json(m, params, body); }, c.model());
  nlohmann::json st = nullptr;
  if (c.standardizer()) st = {{"mean", c.standardizer()->mean}, {"scale", c.standardizer()->scale}};
  return {{"format", kModelFormatName},
          {"version", kModelFormatVersion},
          {"algorithm", to_string(c.algorithm())},
          {"variant", to_string(c.variant())},
          {"dims", feature_dims(c.variant())},
          {"lbp_order", std::string(kLbpOrderTag)},
          {"standardizer", st},
          {"params", params},
          {"model", body}};
}

// Validates the header; `expected` rejects a file trained on another
// feature variant.
inline Classifier classifier_from_json(const nlohmann::json& j, std::optional<FeatureVariant> expected = {}) {
  try {
    if (!j.is_object() || j.value("format", std::string{}) != kModelFormatName) {
      throw FormatError("corrupt model: not a gradeline model file");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw FormatError("model version mismatch: file has version " + j.at("version").dump());
    }
    const auto variant = parse_variant(j.at("variant").get<std::string>());
    const auto dims = j.at("dims").get<std::size_t>();
    if (dims != feature_dims(variant)) throw FormatError("variant mismatch: dims do not match the variant tag");
    if (expected && *expected != variant) {
      throw FormatError("variant mismatch: model is " + to_string(variant) + ", expected " + to_string(*expected));
    }
    if (j.at("lbp_order").get<std::string>() != kLbpOrderTag) {
      throw FormatError("model uses an unsupported LBP neighbour order");
    }
    std::optional<Standardizer> st;
    if (!j.at("standardizer").is_null()) {
      st = Standardizer{j.at("standardizer").at("mean").get<std::vector<double>>(),
                        j.at("standardizer").at("scale").get<std::vector<double>>()};
      if (st->mean.size() != dims || st->scale.size() != dims) {
        throw FormatError("corrupt model: standardizer dimension mismatch");
      }
    }
    const auto algo = parse_algorithm(j.at("algorithm").get<std::string>());
    return Classifier(detail::model_from_json(algo, dims, j.at("params"), j.at("model")), variant, std::move(st));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt model: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("corrupt model: ") + e.what());
  }
}

inline void save_model(const Classifier& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << classifier_to_json(c).dump() << '\n';
  if (!out) throw IoError("short write to model file " + path.string());
}

inline Classifier load_model(const std::filesystem::path& path, std::optional<FeatureVariant> expected = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw FormatError("corrupt model: empty file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt model: ") + e.what());
  }
  return classifier_from_json(j, expected);
}

}  // namespace gradeline
