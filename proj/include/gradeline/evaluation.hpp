#pragma once

// Classification metrics from a confusion matrix, and detection metrics:
// greedy IoU matching, average IoU, precision-recall curves and AP.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/classifiers/dataset.hpp"
#include "gradeline/detection.hpp"
#include "gradeline/error.hpp"

namespace gradeline {

// counts[t][p]: samples of true class t predicted as p.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::uint64_t>> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> names)
      : labels(std::move(names)), counts(labels.size(), std::vector<std::uint64_t>(labels.size(), 0)) {}

  std::size_t n() const noexcept { return labels.size(); }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (const auto& row : counts) s = std::accumulate(row.begin(), row.end(), s);
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < n(); ++i) s += counts[i][i];
    return s;
  }
  std::uint64_t row_sum(std::size_t t) const { return std::accumulate(counts[t].begin(), counts[t].end(), std::uint64_t{0}); }
  std::uint64_t col_sum(std::size_t p) const {
    std::uint64_t s = 0;
    for (const auto& row : counts) s += row[p];
    return s;
  }

  static ConfusionMatrix from_counts(std::vector<std::string> names, std::vector<std::vector<std::uint64_t>> counts) {
    ConfusionMatrix cm(std::move(names));
    if (counts.size() != cm.n()) throw InvalidArgument("confusion matrix must be square over its labels");
    for (const auto& row : counts) {
      if (row.size() != cm.n()) throw InvalidArgument("confusion matrix must be square over its labels");
    }
    cm.counts = std::move(counts);
    return cm;
  }
};

inline std::vector<std::string> label_names() {
  std::vector<std::string> names;
  for (auto l : kAllLabels) names.push_back(to_string(l));
  return names;
}

// Generic form over class indices.
inline ConfusionMatrix confusion(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth,
                                 std::vector<std::string> names) {
  if (pred.size() != truth.size()) throw InvalidArgument("confusion: prediction/truth length mismatch");
  if (pred.empty()) throw InvalidArgument("confusion: no samples");
  ConfusionMatrix cm(std::move(names));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= cm.n() || truth[i] >= cm.n()) throw InvalidArgument("confusion: class index out of range");
    ++cm.counts[truth[i]][pred[i]];
  }
  return cm;
}

inline ConfusionMatrix confusion(const std::vector<Label>& pred, const std::vector<Label>& truth) {
  std::vector<std::size_t> p;
  std::vector<std::size_t> t;
  for (auto l : pred) p.push_back(label_index(l));
  for (auto l : truth) t.push_back(label_index(l));
  return confusion(p, t, label_names());
}

// (TP + TN) / (TP + TN + FP + FN) summed over classes reduces to trace/total.
inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw InvalidArgument("accuracy: empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

// Per class, one-vs-rest: TP / (TP + FN). Absent when the class has no
// true samples.
inline std::vector<std::optional<double>> recall_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.n());
  for (std::size_t c = 0; c < cm.n(); ++c) {
    const auto denom = cm.row_sum(c);
    if (denom > 0) out[c] = static_cast<double>(cm.counts[c][c]) / static_cast<double>(denom);
  }
  return out;
}

// TP / (TP + FP). Absent when the class was never predicted.
inline std::vector<std::optional<double>> precision_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.n());
  for (std::size_t c = 0; c < cm.n(); ++c) {
    const auto denom = cm.col_sum(c);
    if (denom > 0) out[c] = static_cast<double>(cm.counts[c][c]) / static_cast<double>(denom);
  }
  return out;
}

// 2 P R / (P + R); absent when either input is absent or both are zero.
inline std::vector<std::optional<double>> f1_per_class(const ConfusionMatrix& cm) {
  const auto p = precision_per_class(cm);
  const auto r = recall_per_class(cm);
  std::vector<std::optional<double>> out(cm.n());
  for (std::size_t c = 0; c < cm.n(); ++c) {
    if (p[c] && r[c] && (*p[c] + *r[c]) > 0.0) out[c] = 2.0 * *p[c] * *r[c] / (*p[c] + *r[c]);
  }
  return out;
}

namespace detail {
inline nlohmann::json optional_array(const std::vector<std::optional<double>>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& x : v) a.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
  return a;
}
}  // namespace detail

inline nlohmann::json classification_report(const ConfusionMatrix& cm) {
  return {{"labels", cm.labels},
          {"confusion", cm.counts},
          {"total", cm.total()},
          {"accuracy", accuracy(cm)},
          {"recall", detail::optional_array(recall_per_class(cm))},
          {"precision", detail::optional_array(precision_per_class(cm))},
          {"f1", detail::optional_array(f1_per_class(cm))}};
}

// Human-readable table, percentages with two decimals; "-" marks an
// undefined metric.
inline std::string format_confusion(const ConfusionMatrix& cm) {
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << *v * 100.0 << "%";
    return s.str();
  };
  const auto rec = recall_per_class(cm);
  const auto prec = precision_per_class(cm);
  std::ostringstream out;
  out << std::left << std::setw(14) << "true\\pred";
  for (const auto& l : cm.labels) out << std::setw(14) << l;
  out << "recall\n";
  for (std::size_t t = 0; t < cm.n(); ++t) {
    out << std::setw(14) << cm.labels[t];
    for (std::size_t p = 0; p < cm.n(); ++p) out << std::setw(14) << cm.counts[t][p];
    out << pct(rec[t]) << "\n";
  }
  out << std::setw(14) << "precision";
  for (std::size_t p = 0; p < cm.n(); ++p) out << std::setw(14) << pct(prec[p]);
  out << "acc=" << pct(accuracy(cm)) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Detection metrics

struct DetectionEvalResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double average_iou = 0.0;  // over matched pairs; 0 when nothing matched
  double ap = 0.0;
  std::optional<double> recall;
  std::optional<double> precision;
};

// Outcome of one prediction after score-ordered greedy matching.
struct RankedMatch {
  std::size_t pred_index = 0;
  double score = 0.0;
  bool tp = false;
  std::optional<std::size_t> truth_index;
  double iou = 0.0;
};

// Predictions in descending score order (stable on input order); each takes
// the highest-IoU unmatched truth with IoU >= thresh, ties to the earlier
// truth.
inline std::vector<RankedMatch> greedy_match(const std::vector<Detection>& preds, const std::vector<BBox>& truths,
                                             double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) throw InvalidArgument("IoU threshold must be in (0,1]");
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  std::vector<bool> used(truths.size(), false);
  std::vector<RankedMatch> out;
  out.reserve(preds.size());
  for (auto pi : order) {
    RankedMatch m;
    m.pred_index = pi;
    m.score = preds[pi].score;
    double best = -1.0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (used[t]) continue;
      const double v = iou(preds[pi].bbox, truths[t]);
      if (v >= iou_thresh && v > best) {
        best = v;
        m.truth_index = t;
      }
    }
    if (m.truth_index) {
      used[*m.truth_index] = true;
      m.tp = true;
      m.iou = best;
    }
    out.push_back(m);
  }
  return out;
}

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

using PrCurve = std::vector<PrPoint>;

// One point per ranked prediction; recall is non-decreasing along it.
inline PrCurve pr_curve(const std::vector<RankedMatch>& ranked, std::size_t num_truths) {
  PrCurve curve;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    tp += ranked[k].tp ? 1 : 0;
    curve.push_back({num_truths ? static_cast<double>(tp) / num_truths : 0.0,
                     static_cast<double>(tp) / static_cast<double>(k + 1), ranked[k].score});
  }
  return curve;
}

enum class ApConvention {
  Stepwise,       // sum over ranks of (r_k - r_{k-1}) * p_k
  Interpolated,   // same, with p_k replaced by max precision at recall >= r_k
  ElevenPoint,    // mean interpolated precision at recall 0, 0.1, ..., 1
};

inline std::string to_string(ApConvention c) {
  switch (c) {
    case ApConvention::Stepwise: return "stepwise";
    case ApConvention::Interpolated: return "all-point-interpolated";
    case ApConvention::ElevenPoint: return "11-point";
  }
  return "?";
}

inline double ap_from_curve(const PrCurve& curve, ApConvention convention = ApConvention::Stepwise) {
  if (curve.empty()) return 0.0;
  std::vector<double> interp(curve.size());
  double running = 0.0;
  for (std::size_t k = curve.size(); k-- > 0;) {
    running = std::max(running, curve[k].precision);
    interp[k] = running;
  }
  if (convention == ApConvention::ElevenPoint) {
    double s = 0.0;
    for (int i = 0; i <= 10; ++i) {
      const double r = i / 10.0;
      double best = 0.0;
      for (std::size_t k = 0; k < curve.size(); ++k) {
        if (curve[k].recall >= r - 1e-12) best = std::max(best, curve[k].precision);
      }
      s += best;
    }
    return s / 11.0;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    const double dr = curve[k].recall - prev_recall;
    if (dr > 0.0) ap += dr * (convention == ApConvention::Stepwise ? curve[k].precision : interp[k]);
    prev_recall = curve[k].recall;
  }
  return ap;
}

inline double average_precision(const std::vector<Detection>& preds, const std::vector<BBox>& truths,
                                double iou_thresh = 0.5, ApConvention convention = ApConvention::Stepwise) {
  if (truths.empty()) throw InvalidArgument("average_precision: empty truth set");
  return ap_from_curve(pr_curve(greedy_match(preds, truths, iou_thresh), truths.size()), convention);
}

namespace detail {
inline DetectionEvalResult summarize(std::vector<RankedMatch> ranked, std::size_t num_truths,
                                     ApConvention convention) {
  DetectionEvalResult r;
  double iou_sum = 0.0;
  for (const auto& m : ranked) {
    if (m.tp) {
      ++r.tp;
      iou_sum += m.iou;
    } else {
      ++r.fp;
    }
  }
  r.fn = num_truths - r.tp;
  r.average_iou = r.tp ? iou_sum / static_cast<double>(r.tp) : 0.0;
  if (r.tp + r.fn > 0) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.tp + r.fp > 0) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedMatch& a, const RankedMatch& b) { return a.score > b.score; });
  r.ap = num_truths ? ap_from_curve(pr_curve(ranked, num_truths), convention) : 0.0;
  return r;
}
}  // namespace detail

inline DetectionEvalResult match_detections(const std::vector<Detection>& preds, const std::vector<BBox>& truths,
                                            double iou_thresh = 0.5,
                                            ApConvention convention = ApConvention::Stepwise) {
  return detail::summarize(greedy_match(preds, truths, iou_thresh), truths.size(), convention);
}

struct ImageDetections {
  std::string image;
  std::vector<Detection> preds;
  std::vector<BBox> truths;
};

// Matching is per image; AP ranks all predictions of all images together.
// With a single defect class, mAP equals this AP.
inline DetectionEvalResult evaluate_detections(const std::vector<ImageDetections>& images, double iou_thresh = 0.5,
                                               ApConvention convention = ApConvention::Stepwise) {
  std::vector<RankedMatch> all;
  std::size_t truths = 0;
  for (const auto& im : images) {
    auto ranked = greedy_match(im.preds, im.truths, iou_thresh);
    all.insert(all.end(), ranked.begin(), ranked.end());
    truths += im.truths.size();
  }
  return detail::summarize(std::move(all), truths, convention);
}

inline nlohmann::json to_json(const DetectionEvalResult& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"tp", r.tp},           {"fp", r.fp},   {"fn", r.fn},
          {"average_iou", r.average_iou}, {"ap", r.ap}, {"map", r.ap},
          {"recall", opt(r.recall)},      {"precision", opt(r.precision)}};
}

}  // namespace gradeline
