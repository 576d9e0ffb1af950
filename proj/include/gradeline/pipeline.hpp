#pragma once

// Two-layer grading of one frame: segmentation, first-layer classification,
// layer-2 defect counting for ripened fruit only, and the routing decision.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/classifiers/model.hpp"
#include "gradeline/detection.hpp"
#include "gradeline/error.hpp"
#include "gradeline/features.hpp"
#include "gradeline/imaging.hpp"
#include "gradeline/mask.hpp"
#include "gradeline/segmentation.hpp"

namespace gradeline {

enum class Route { Market, Defective };

inline std::string to_string(Route r) { return r == Route::Market ? "Market" : "Defective"; }

inline Route parse_route(std::string_view s) {
  if (s == "Market") return Route::Market;
  if (s == "Defective") return Route::Defective;
  throw InvalidArgument("unknown route '" + std::string(s) + "'");
}

// Track per outcome. Well-ripened fruit defaults to Market with a
// priority-sale note.
struct RoutingPolicy {
  Route unripened = Route::Market;
  Route mid_ripened = Route::Market;
  Route well_ripened = Route::Market;
  Route overripened = Route::Defective;
  Route unclassifiable = Route::Defective;
  Route degraded = Route::Defective;
  bool priority_sale_note = true;
};

struct PipelineConfig {
  SegmentationConfig segmentation;
  RoutingPolicy policy;
};

struct StageTimings {
  double segment_ms = 0.0;
  double features_ms = 0.0;
  double classify_ms = 0.0;
  double detect_ms = 0.0;
  double total_ms = 0.0;
};

struct GradeResult {
  std::optional<Label> label;  // empty when unclassifiable
  std::optional<Subclass> subclass;
  std::vector<Detection> detections;
  Route route = Route::Defective;
  StageTimings timings;
  bool layer2_invoked = false;
  bool unclassifiable = false;
  bool degraded = false;  // ripened but layer 2 unavailable
  std::string note;
};

// Field-for-field equality, timings excluded.
inline bool same_outcome(const GradeResult& a, const GradeResult& b) {
  return a.label == b.label && a.subclass == b.subclass && a.detections == b.detections && a.route == b.route &&
         a.layer2_invoked == b.layer2_invoked && a.unclassifiable == b.unclassifiable && a.degraded == b.degraded &&
         a.note == b.note;
}

// Detector decorator that counts detect() calls.
class CountingDetector final : public Detector {
 public:
  explicit CountingDetector(const Detector& inner) : inner_(inner) {}
  std::vector<Detection> detect(const RgbImage& img, const Mask& fruit) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.detect(img, fruit);
  }
  std::string name() const override { return inner_.name(); }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  const Detector& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

namespace detail {
using Clock = std::chrono::steady_clock;
inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}
}  // namespace detail

// Layer 1 only. On success `label` and `fruit` are set; on degenerate input
// the result is marked unclassifiable and routed.
struct FirstLayerOutcome {
  GradeResult result;
  Mask fruit;
};

inline FirstLayerOutcome grade_first_layer(const RgbImage& img, const Classifier& clf, const PipelineConfig& cfg = {}) {
  using detail::Clock;
  FirstLayerOutcome out;
  auto& r = out.result;
  auto t = Clock::now();
  try {
    out.fruit = segment(img, cfg.segmentation);
  } catch (const DegenerateInput&) {
    r.timings.segment_ms = detail::ms_since(t);
    r.unclassifiable = true;
    r.route = cfg.policy.unclassifiable;
    r.note = "unclassifiable: no fruit region found";
    return out;
  }
  r.timings.segment_ms = detail::ms_since(t);

  t = Clock::now();
  const FeatureVector fv = build_feature_vector(apply_mask(img, out.fruit), out.fruit, clf.variant());
  r.timings.features_ms = detail::ms_since(t);

  t = Clock::now();
  r.label = clf.predict(fv);
  r.timings.classify_ms = detail::ms_since(t);
  if (*r.label == Label::Unripened) r.route = cfg.policy.unripened;
  if (*r.label == Label::Overripened) r.route = cfg.policy.overripened;
  return out;
}

// Completes a ripened result with layer-2 detections, or marks it degraded
// when they are unavailable.
inline void apply_layer2(GradeResult& r, const std::optional<std::vector<Detection>>& dets,
                         const RoutingPolicy& policy) {
  if (!dets) {
    r.degraded = true;
    r.layer2_invoked = false;
    r.subclass.reset();
    r.route = policy.degraded;
    r.note = "degraded: defect detection unavailable";
    return;
  }
  r.layer2_invoked = true;
  r.detections = *dets;
  r.subclass = ripeness_subclass(*dets);
  if (*r.subclass == Subclass::MidRipened) {
    r.route = policy.mid_ripened;
  } else {
    r.route = policy.well_ripened;
    if (policy.priority_sale_note) r.note = "priority sale";
  }
}

inline GradeResult grade(const RgbImage& img, const Classifier& clf, const Detector& detector,
                         const PipelineConfig& cfg = {}) {
  const auto t0 = detail::Clock::now();
  auto [r, fruit] = grade_first_layer(img, clf, cfg);
  if (r.label == Label::Ripened) {
    const auto t = detail::Clock::now();
    apply_layer2(r, detector.detect(img, fruit), cfg.policy);
    r.timings.detect_ms = detail::ms_since(t);
  }
  r.timings.total_ms = detail::ms_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// JSON. An unclassifiable result carries "label": "Unclassifiable".

inline nlohmann::json to_json(const StageTimings& t) {
  return {{"segment_ms", t.segment_ms},   {"features_ms", t.features_ms}, {"classify_ms", t.classify_ms},
          {"detect_ms", t.detect_ms},     {"total_ms", t.total_ms}};
}

inline StageTimings timings_from_json(const nlohmann::json& j) {
  StageTimings t;
  t.segment_ms = j.value("segment_ms", 0.0);
  t.features_ms = j.value("features_ms", 0.0);
  t.classify_ms = j.value("classify_ms", 0.0);
  t.detect_ms = j.value("detect_ms", 0.0);
  t.total_ms = j.value("total_ms", 0.0);
  return t;
}

inline nlohmann::json to_json(const GradeResult& r) {
  nlohmann::json j;
  j["label"] = r.label ? to_string(*r.label) : std::string("Unclassifiable");
  j["subclass"] = r.subclass ? nlohmann::json(to_string(*r.subclass)) : nlohmann::json(nullptr);
  j["detections"] = to_json(r.detections);
  j["route"] = to_string(r.route);
  j["timings"] = to_json(r.timings);
  j["layer2_invoked"] = r.layer2_invoked;
  j["unclassifiable"] = r.unclassifiable;
  j["degraded"] = r.degraded;
  j["note"] = r.note;
  return j;
}

inline GradeResult grade_result_from_json(const nlohmann::json& j) {
  try {
    GradeResult r;
    const auto label = j.at("label").get<std::string>();
    if (label != "Unclassifiable") r.label = parse_label(label);
    if (j.contains("subclass") && !j.at("subclass").is_null()) {
      r.subclass = parse_subclass(j.at("subclass").get<std::string>());
    }
    r.detections = detections_from_json(j.value("detections", nlohmann::json::array()));
    r.route = parse_route(j.at("route").get<std::string>());
    if (j.contains("timings")) r.timings = timings_from_json(j.at("timings"));
    r.layer2_invoked = j.value("layer2_invoked", false);
    r.unclassifiable = j.value("unclassifiable", !r.label.has_value());
    r.degraded = j.value("degraded", false);
    r.note = j.value("note", std::string());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad grade result: ") + e.what());
  }
}

}  // namespace gradeline
