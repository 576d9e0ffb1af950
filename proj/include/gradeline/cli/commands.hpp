#pragma once

// Workflow commands behind the gradeline tool. Each returns its JSON report;
// the tool only parses flags, prints and maps results to exit codes.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/augmentation.hpp"
#include "gradeline/classifiers/forest.hpp"
#include "gradeline/classifiers/model.hpp"
#include "gradeline/detection.hpp"
#include "gradeline/evaluation.hpp"
#include "gradeline/image_io.hpp"
#include "gradeline/pipeline.hpp"
#include "gradeline/segmentation.hpp"
#include "gradeline/synthetic.hpp"

namespace gradeline::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// generate

// Writes n synthetic frames per class into out_dir: <class>_NNNNN.png, its
// fruit mask (_mask.png) and ground truth (.json), plus manifest.jsonl.
// Ripened frames alternate between mid and well subclasses.
inline DatasetManifest cmd_generate(std::size_t n_per_class, std::uint64_t seed, const fs::path& out_dir,
                                    const GeneratorConfig& gen = {}) {
  fs::create_directories(out_dir);
  struct Job {
    Label label;
    std::optional<Subclass> subclass;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (auto label : kAllLabels) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      std::optional<Subclass> sub;
      if (label == Label::Ripened) sub = i % 2 == 0 ? Subclass::MidRipened : Subclass::WellRipened;
      jobs.push_back({label, sub, i});
    }
  }
  std::vector<ManifestEntry> entries(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& j = jobs[k];
    const auto item_seed = detail::mix_seed(seed ^ detail::mix_seed(k + 1));
    const SyntheticFrame f = generate_synthetic(sample_spec(j.label, j.subclass, item_seed, gen));
    std::ostringstream stem;
    std::string cls = to_string(j.label);
    std::transform(cls.begin(), cls.end(), cls.begin(), [](unsigned char c) { return std::tolower(c); });
    stem << cls << "_" << std::setw(5) << std::setfill('0') << j.index;
    save_image(out_dir / (stem.str() + ".png"), f.image);
    save_mask(out_dir / (stem.str() + "_mask.png"), f.truth.fruit);
    {
      std::ofstream t(out_dir / (stem.str() + ".json"));
      t << truth_to_json(f.truth).dump() << '\n';
      if (!t) throw IoError("cannot write ground truth for " + stem.str());
    }
    ManifestEntry e;
    e.path = stem.str() + ".png";
    e.label = j.label;
    e.tag = Provenance::Synthetic;
    e.extra = {{"mask", stem.str() + "_mask.png"}, {"truth", stem.str() + ".json"}, {"spots", f.truth.spots.size()}};
    if (f.truth.subclass) e.extra["subclass"] = to_string(*f.truth.subclass);
    entries[k] = std::move(e);
  });
  DatasetManifest m;
  m.base_dir = out_dir;
  m.entries = std::move(entries);
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

// ---------------------------------------------------------------------------
// augment

inline DatasetManifest cmd_augment(const fs::path& manifest, const AugmentationPlan& plan, std::uint64_t seed,
                                   const fs::path& out_dir, const AugmentationConfig& cfg = {}) {
  const DatasetManifest m = load_manifest(manifest);
  DatasetManifest out = augment_dataset(m, plan, seed, out_dir, cfg);
  save_manifest(out, out_dir / "manifest.jsonl");
  return out;
}

inline nlohmann::json manifest_summary(const DatasetManifest& m) {
  nlohmann::json tags = nlohmann::json::object();
  for (const auto& [tag, n] : m.counts()) tags[to_string(tag)] = n;
  nlohmann::json labels = nlohmann::json::object();
  for (auto l : kAllLabels) labels[to_string(l)] = 0;
  for (const auto& e : m.entries) labels[to_string(e.label)] = labels[to_string(e.label)].get<std::size_t>() + 1;
  return {{"entries", m.entries.size()}, {"tags", tags}, {"labels", labels}};
}

// ---------------------------------------------------------------------------
// features, split, train, eval

struct ExtractedFeatures {
  LabeledDataset dataset;
  std::vector<std::size_t> entry_index;   // manifest entry of each dataset row
  std::vector<std::string> unclassifiable;  // entries whose segmentation failed
};

// Segments every manifest image and builds its feature vector.
inline ExtractedFeatures extract_features(const DatasetManifest& m, FeatureVariant variant,
                                          const SegmentationConfig& seg = {}) {
  std::vector<std::optional<FeatureVector>> rows(m.entries.size());
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const RgbImage img = load_image(m.resolve(m.entries[i]));
    try {
      const Mask fruit = segment(img, seg);
      rows[i] = build_feature_vector(apply_mask(img, fruit), fruit, variant);
    } catch (const DegenerateInput&) {
    }
  });
  ExtractedFeatures out{LabeledDataset(variant), {}, {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]) {
      out.unclassifiable.push_back(m.entries[i].path);
      continue;
    }
    out.dataset.add(*rows[i], m.entries[i].label);
    out.entry_index.push_back(i);
  }
  return out;
}

// Per-class shuffled hold-out split; each class contributes
// round(fraction * count) rows to the test side.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const std::vector<Label>& labels,
                                                                                      double test_fraction,
                                                                                      std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InvalidArgument("hold-out fraction must be in [0,1)");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, test;
  for (auto l : kAllLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == l) idx.push_back(i);
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(round_half_up(test_fraction * static_cast<double>(idx.size())));
    test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

inline ConfusionMatrix evaluate_classifier(const Classifier& clf, const LabeledDataset& ds) {
  std::vector<Label> pred;
  pred.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) pred.push_back(clf.predict(ds.row(i)));
  return confusion(pred, ds.labels());
}

inline nlohmann::json train_params(const TrainOptions& opt) {
  switch (opt.algorithm) {
    case Algorithm::Knn: return {{"k", opt.knn_k}, {"metric", to_string(opt.knn_metric)}};
    case Algorithm::Nb: return nlohmann::json::object();
    case Algorithm::Rf:
      return {{"trees", opt.forest.trees}, {"seed", opt.forest.seed}, {"max_features", opt.forest.max_features}};
    case Algorithm::Svm:
      return {{"gamma", opt.svm.gamma}, {"C", opt.svm.C}, {"tol", opt.svm.tol}, {"max_passes", opt.svm.max_passes}};
  }
  return nullptr;
}

struct TrainResult {
  Classifier classifier;
  nlohmann::json report;
};

// Trains on the training side of a stratified split and reports metrics on
// the hold-out side. "wall_ms" is the only non-deterministic report field.
inline TrainResult train_on_features(const ExtractedFeatures& feats, const TrainOptions& opt, std::uint64_t seed,
                                     double holdout) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto [train_idx, test_idx] = stratified_split(feats.dataset.labels(), holdout, seed);
  TrainOptions o = opt;
  if (o.algorithm == Algorithm::Rf) o.forest.seed = seed;
  Classifier clf = train_classifier(feats.dataset.subset(train_idx), o);
  nlohmann::json report{{"algorithm", to_string(o.algorithm)},
                        {"variant", to_string(feats.dataset.variant())},
                        {"params", train_params(o)},
                        {"standardize", o.standardize},
                        {"seed", seed},
                        {"holdout", holdout},
                        {"n_train", train_idx.size()},
                        {"n_test", test_idx.size()},
                        {"unclassifiable", feats.unclassifiable}};
  report["metrics"] = test_idx.empty() ? nlohmann::json(nullptr)
                                       : classification_report(evaluate_classifier(clf, feats.dataset.subset(test_idx)));
  report["wall_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(clf), std::move(report)};
}

inline nlohmann::json cmd_train(const fs::path& manifest, const TrainOptions& opt, FeatureVariant variant,
                                std::uint64_t seed, double holdout, const std::optional<fs::path>& model_out,
                                const SegmentationConfig& seg = {}) {
  const DatasetManifest m = load_manifest(manifest);
  const ExtractedFeatures feats = extract_features(m, variant, seg);
  auto [clf, report] = train_on_features(feats, opt, seed, holdout);
  if (model_out) {
    save_model(clf, *model_out);
    report["model"] = model_out->string();
  }
  return report;
}

inline nlohmann::json cmd_eval_model(const fs::path& model, const fs::path& manifest,
                                     std::optional<FeatureVariant> expected = {}, const SegmentationConfig& seg = {}) {
  const Classifier clf = load_model(model, expected);
  const DatasetManifest m = load_manifest(manifest);
  const ExtractedFeatures feats = extract_features(m, clf.variant(), seg);
  nlohmann::json r = classification_report(evaluate_classifier(clf, feats.dataset));
  r["variant"] = to_string(clf.variant());
  r["algorithm"] = to_string(clf.algorithm());
  r["unclassifiable"] = feats.unclassifiable;
  return r;
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad JSON in " + path.string() + ": " + e.what());
  }
}

// Confusion counts file: {"labels": [...], "counts": [[...], ...]} with rows
// as true classes and columns as predictions.
inline ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  try {
    return ConfusionMatrix::from_counts(j.at("labels").get<std::vector<std::string>>(),
                                        j.at("counts").get<std::vector<std::vector<std::uint64_t>>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad confusion file: ") + e.what());
  }
}

inline nlohmann::json cmd_eval_confusion(const fs::path& counts) {
  return classification_report(confusion_from_json(read_json_file(counts)));
}

// Detection and truth files are JSON arrays of boxes; an optional "image"
// field groups them per image (missing means one shared image).
inline std::vector<ImageDetections> pair_detections(const nlohmann::json& preds, const nlohmann::json& truths) {
  if (!preds.is_array() || !truths.is_array()) throw FormatError("detection files must hold JSON arrays");
  std::map<std::string, ImageDetections> by_image;
  for (const auto& p : preds) {
    const auto key = p.value("image", std::string());
    by_image[key].image = key;
    by_image[key].preds.push_back(detection_from_json(p));
  }
  for (const auto& t : truths) {
    const auto key = t.value("image", std::string());
    by_image[key].image = key;
    by_image[key].truths.push_back(bbox_from_json(t));
  }
  std::vector<ImageDetections> out;
  for (auto& [k, v] : by_image) out.push_back(std::move(v));
  return out;
}

inline nlohmann::json cmd_eval_detections(const fs::path& preds, const fs::path& truths, double iou_thresh = 0.5,
                                          ApConvention convention = ApConvention::Stepwise) {
  const auto images = pair_detections(read_json_file(preds), read_json_file(truths));
  std::size_t n_truth = 0;
  for (const auto& im : images) n_truth += im.truths.size();
  if (n_truth == 0) throw InvalidArgument("ground truth has no boxes");
  nlohmann::json r = to_json(evaluate_detections(images, iou_thresh, convention));
  r["iou_threshold"] = iou_thresh;
  r["convention"] = to_string(convention);
  r["images"] = images.size();
  return r;
}

// ---------------------------------------------------------------------------
// grade

inline GradeResult cmd_grade(const fs::path& image, const fs::path& model, const SpotDetectorConfig& det_cfg = {},
                             const PipelineConfig& cfg = {}) {
  const RgbImage img = load_image(image);
  const Classifier clf = load_model(model);
  const SpotDetector detector(det_cfg);
  return grade(img, clf, detector, cfg);
}

inline int exit_code_for(const GradeResult& r) { return r.route == Route::Market ? 0 : 2; }

}  // namespace gradeline::cli
