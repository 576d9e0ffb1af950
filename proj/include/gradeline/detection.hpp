#pragma once

// Second-layer defect localisation: the detector contract, a colour/region
// brown-spot detector and the defect-count ripeness rule.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/error.hpp"
#include "gradeline/features.hpp"
#include "gradeline/imaging.hpp"
#include "gradeline/mask.hpp"
#include "gradeline/regions.hpp"

namespace gradeline {

inline double iou(const BBox& a, const BBox& b) {
  const long long ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const long long iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const long long inter = ix * iy;
  if (inter == 0) return 0.0;
  const long long uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct Detection {
  BBox bbox;
  double score = 0.0;  // [0, 1]
  std::string class_tag = "defect";

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Pluggable second-layer detector. Implementations return boxes inside the
// image and scores in [0, 1]; they are stateless after construction, so one
// instance may serve concurrent calls.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const RgbImage& img, const Mask& fruit) const = 0;
  virtual std::string name() const = 0;
};

struct SpotDetectorConfig {
  double hue_min = 10.0;   // degrees
  double hue_max = 40.0;   // degrees
  double max_value = 0.55;
  std::size_t min_area = 25;
  int merge_gap = 2;

  void validate() const {
    if (!(hue_min >= 0.0 && hue_max < 360.0 && hue_min <= hue_max)) {
      throw InvalidArgument("spot detector: hue band must lie within [0,360)");
    }
    if (!(max_value > 0.0 && max_value <= 1.0)) throw InvalidArgument("spot detector: max V must be in (0,1]");
    if (min_area == 0) throw InvalidArgument("spot detector: min area must be >= 1");
    if (merge_gap < 0) throw InvalidArgument("spot detector: merge gap must be >= 0");
  }
};

// Fruit pixels whose hue falls in the brown band and whose value is at or
// below max_value. Achromatic pixels (S = 0) never qualify.
inline Mask spot_mask(const RgbImage& img, const Mask& fruit, const SpotDetectorConfig& cfg) {
  if (!img.same_shape(fruit)) throw InvalidArgument("detect_spots: dimension mismatch");
  Mask spots(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (!fruit.pixels()[i]) continue;
    const Hsv hsv = rgb_to_hsv(img.pixels()[i]);
    if (hsv.s > 0.0 && hsv.h >= cfg.hue_min && hsv.h <= cfg.hue_max && hsv.v <= cfg.max_value) {
      spots.pixels()[i] = 1;
    }
  }
  return spots;
}

// Spot pixels are grouped by dilating with the merge gap and taking
// 4-connected components; each group's own (undilated) pixels give its area
// and tight box. Groups of at least min_area pixels become detections with
// score min(1, area / (4 min_area)).
inline std::vector<Detection> detect_spots(const RgbImage& img, const Mask& fruit, const SpotDetectorConfig& cfg = {}) {
  cfg.validate();
  const Mask spots = spot_mask(img, fruit, cfg);
  const Mask grown = dilate(spots, cfg.merge_gap);
  std::vector<Detection> out;
  for (const auto& group : connected_components(grown)) {
    int x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
    std::size_t area = 0;
    for (const auto& p : group.pixels) {
      if (!spots.at(p.x, p.y)) continue;
      ++area;
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    if (area < cfg.min_area) continue;
    Detection d;
    d.bbox = BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    d.score = std::min(1.0, static_cast<double>(area) / (4.0 * static_cast<double>(cfg.min_area)));
    out.push_back(d);
  }
  return out;
}

class SpotDetector final : public Detector {
 public:
  explicit SpotDetector(SpotDetectorConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  std::vector<Detection> detect(const RgbImage& img, const Mask& fruit) const override {
    return detect_spots(img, fruit, cfg_);
  }
  std::string name() const override { return "brown-spot"; }
  const SpotDetectorConfig& config() const noexcept { return cfg_; }

 private:
  SpotDetectorConfig cfg_;
};

enum class Subclass { MidRipened, WellRipened };

inline std::string to_string(Subclass s) { return s == Subclass::MidRipened ? "MidRipened" : "WellRipened"; }

inline Subclass parse_subclass(std::string_view s) {
  if (s == "MidRipened") return Subclass::MidRipened;
  if (s == "WellRipened") return Subclass::WellRipened;
  throw InvalidArgument("unknown subclass '" + std::string(s) + "'");
}

inline constexpr std::size_t kMaxMidRipenedDefects = 5;

// Five or fewer defect areas: mid-ripened; more: well-ripened.
inline Subclass ripeness_subclass(std::size_t defect_count) {
  return defect_count <= kMaxMidRipenedDefects ? Subclass::MidRipened : Subclass::WellRipened;
}

inline Subclass ripeness_subclass(const std::vector<Detection>& dets) { return ripeness_subclass(dets.size()); }

// ---------------------------------------------------------------------------
// JSON: detections are {x, y, w, h, score, class}; ground-truth files carry
// the same fields plus "image". Boxes given as corner pairs
// {x1, y1, x2, y2} (inclusive-exclusive) are converted on load.

inline nlohmann::json to_json(const BBox& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

inline BBox bbox_from_json(const nlohmann::json& j) {
  BBox b;
  if (j.contains("x1")) {
    const int x1 = j.at("x1").get<int>();
    const int y1 = j.at("y1").get<int>();
    const int x2 = j.at("x2").get<int>();
    const int y2 = j.at("y2").get<int>();
    b = BBox{std::min(x1, x2), std::min(y1, y2), std::abs(x2 - x1), std::abs(y2 - y1)};
  } else {
    b = BBox{j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>()};
  }
  if (!b.valid()) throw FormatError("box must have positive width and height");
  return b;
}

inline nlohmann::json to_json(const Detection& d) {
  auto j = to_json(d.bbox);
  j["score"] = d.score;
  j["class"] = d.class_tag;
  return j;
}

inline Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  d.bbox = bbox_from_json(j);
  d.score = j.value("score", 1.0);
  d.class_tag = j.value("class", std::string("defect"));
  if (d.score < 0.0 || d.score > 1.0) throw FormatError("detection score outside [0,1]");
  return d;
}

inline nlohmann::json to_json(const std::vector<Detection>& dets) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& d : dets) a.push_back(to_json(d));
  return a;
}

inline std::vector<Detection> detections_from_json(const nlohmann::json& j) {
  std::vector<Detection> out;
  for (const auto& e : j) out.push_back(detection_from_json(e));
  return out;
}

}  // namespace gradeline
