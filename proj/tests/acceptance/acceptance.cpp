// One PASS/FAIL line per acceptance criterion. Tolerances and runtime limits
// are pinned here; the exit status is nonzero if any line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "gradeline/cli/commands.hpp"
#include "gradeline/services/cloud.hpp"
#include "gradeline/services/edge.hpp"
#include "gradeline/services/simulator.hpp"
#include "oracles/ap_reference.hpp"
#include "oracles/box_raster.hpp"
#include "oracles/hsv_reference.hpp"
#include "oracles/kmeans_bruteforce.hpp"
#include "support/test_support.hpp"

using namespace gradeline;

namespace {

constexpr double kPp = 0.01 / 100.0;

// Collects the first failed check so the summary line can name it.
class Checks {
 public:
  bool expect(bool ok, const std::string& what) {
    if (!ok) {
      ++failed_;
      if (first_.empty()) first_ = what;
    }
    return ok;
  }
  bool near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s << what << ": got " << got << ", want " << want << " +/- " << tol;
    return expect(std::abs(got - want) <= tol, s.str());
  }
  void note(std::string n) { notes_ = std::move(n); }
  bool ok() const { return failed_ == 0; }
  std::string detail() const {
    if (ok()) return notes_;
    return std::to_string(failed_) + " failed; first: " + first_;
  }

 private:
  std::size_t failed_ = 0;
  std::string first_;
  std::string notes_;
};

struct Criterion {
  std::string name;
  double limit_s;
  std::function<void(Checks&)> body;
};

bool run_criterion(const Criterion& c) {
  Checks checks;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    c.body(checks);
  } catch (const std::exception& e) {
    checks.expect(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream lim;
  lim << "runtime " << secs << " s exceeds " << c.limit_s << " s";
  checks.expect(secs < c.limit_s, lim.str());
  const std::string d = checks.detail();
  std::printf("%s  %-28s %.2fs/%gs%s%s\n", checks.ok() ? "PASS" : "FAIL", c.name.c_str(), secs, c.limit_s,
              d.empty() ? "" : "  ", d.c_str());
  std::fflush(stdout);
  return checks.ok();
}

ConfusionMatrix cm_from_counts(std::vector<std::string> labels, std::vector<std::vector<std::uint64_t>> counts) {
  return ConfusionMatrix::from_counts(std::move(labels), std::move(counts));
}

void ripeness_counts(Checks& c) {
  const auto cm = cm_from_counts({"Unripened", "Ripened", "Overripened"}, {{66, 0, 0}, {0, 60, 2}, {0, 1, 71}});
  const auto rec = recall_per_class(cm);
  const auto prec = precision_per_class(cm);
  c.near(accuracy(cm), 0.9850, kPp, "accuracy");
  const double want_rec[] = {1.0000, 0.9677, 0.9861};
  const double want_prec[] = {1.0000, 0.9836, 0.9726};
  for (std::size_t i = 0; i < 3; ++i) {
    c.expect(rec[i].has_value() && prec[i].has_value(), "defined metrics");
    c.near(rec[i].value_or(-1), want_rec[i], kPp, "sensitivity " + cm.labels[i]);
    c.near(prec[i].value_or(-1), want_prec[i], kPp, "precision " + cm.labels[i]);
  }
}

void subclass_counts(Checks& c) {
  const auto cm = cm_from_counts({"MidRipened", "WellRipened"}, {{31, 2}, {4, 26}});
  const auto rec = recall_per_class(cm);
  const auto prec = precision_per_class(cm);
  c.near(rec[0].value_or(-1), 0.9394, kPp, "sensitivity mid");
  c.near(rec[1].value_or(-1), 0.8667, kPp, "sensitivity well");
  c.near(prec[0].value_or(-1), 0.8857, kPp, "precision mid");
  c.near(prec[1].value_or(-1), 0.9285, kPp, "precision well");
}

void hsv(Checks& c) {
  const Hsv red = rgb_to_hsv(255, 0, 0);
  const Hsv green = rgb_to_hsv(0, 255, 0);
  const Hsv gray = rgb_to_hsv(100, 100, 100);
  c.expect(red.h == 0.0 && red.s == 1.0 && red.v == 1.0, "red exact");
  c.expect(green.h == 120.0 && green.s == 1.0 && green.v == 1.0, "green exact");
  c.expect(gray.h == 0.0 && gray.s == 0.0 && gray.v == 100.0 / 255.0, "gray exact");
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> d(0, 255);
  for (int i = 0; i < 10000; ++i) {
    const int r = d(rng), g = d(rng), b = d(rng);
    const Hsv got = rgb_to_hsv(r, g, b);
    const auto ref = oracle::hsv(r, g, b);
    const std::string at = " at " + std::to_string(r) + "," + std::to_string(g) + "," + std::to_string(b);
    c.expect(oracle::angle_diff(got.h, ref.h) <= 1e-6, "hue" + at);
    c.expect(std::abs(got.s - ref.s) <= 1e-6, "saturation" + at);
    c.expect(std::abs(got.v - ref.v) <= 1e-6, "value" + at);
  }
}

void lbp_checks(Checks& c) {
  c.expect(lbp(GrayImage(3, 3, 77)).at(0, 0) == 255, "uniform patch is 255");
  GrayImage ring(3, 3);
  ring.at(1, 1) = 100;
  for (std::size_t p = 0; p < 8; ++p) {
    const auto [dx, dy] = kLbpNeighbours[p];
    ring.at(1 + dx, 1 + dy) = p % 2 ? 90 : 110;
  }
  c.expect(lbp(ring).at(0, 0) == 85, "alternating ring is 85");
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> shift(1, 55);
  for (int i = 0; i < 1000; ++i) {
    const auto g = testing_support::random_gray(rng, 8 + i % 9, 6 + i % 7, 0, 200);
    const int s = shift(rng);
    GrayImage moved = g;
    for (auto& v : moved.pixels()) v = static_cast<std::uint8_t>(v + s);
    c.expect(lbp(g) == lbp(moved), "gray shift invariance, image " + std::to_string(i));
  }
}

std::vector<std::vector<double>> random_rows(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
  for (auto& r : rows) {
    for (auto& v : r) v = d(rng);
  }
  return rows;
}

void kmeans_checks(Checks& c) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pts = PointSet::from_rows(random_rows(rng, 20 + trial % 30, 1 + trial % 3));
    const auto m = kmeans(pts, {.k = 2 + static_cast<std::size_t>(trial % 4), .seed = static_cast<std::uint64_t>(trial)});
    c.expect(!m.wcss_history.empty(), "history recorded");
    for (std::size_t i = 1; i < m.wcss_history.size(); ++i) {
      c.expect(m.wcss_history[i] <= m.wcss_history[i - 1] + 1e-9, "WCSS increased in trial " + std::to_string(trial));
    }
  }
  std::normal_distribution<double> noise(0.0, 0.6);
  for (int trial = 0; trial < 45; ++trial) {
    const std::size_t n = 4 + trial % 9;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      const double centre = i % 2 ? 5.0 : -5.0;
      rows.push_back({centre + noise(rng), centre + noise(rng)});
    }
    const auto best = oracle::best_two_partition(rows);
    const auto m = kmeans(PointSet::from_rows(rows), {.k = 2, .seed = static_cast<std::uint64_t>(trial)});
    c.near(m.wcss, best.wcss, 1e-9, "optimal WCSS, trial " + std::to_string(trial));
    for (std::size_t i = 0; i < n; ++i) {
      c.expect((m.assignments[i] == m.assignments[0]) == (best.side[i] == best.side[0]),
               "optimal partition, trial " + std::to_string(trial));
    }
  }
}

LabeledDataset blobs(std::mt19937_64& rng, std::size_t n_per_class, double spread) {
  std::normal_distribution<double> noise(0.0, spread);
  LabeledDataset ds(FeatureVariant::B);
  const double centres[3][2] = {{-4, -4}, {4, -4}, {0, 4}};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      ds.add({centres[k][0] + noise(rng), centres[k][1] + noise(rng)}, label_from_index(k));
    }
  }
  return ds;
}

double accuracy_on(const Classifier& clf, const LabeledDataset& ds) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) ok += clf.predict(ds.row(i)) == ds.label(i);
  return ds.size() ? static_cast<double>(ok) / static_cast<double>(ds.size()) : 0.0;
}

void svm_checks(Checks& c) {
  std::mt19937_64 rng(34);
  std::normal_distribution<double> noise(0.0, 1.2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
      const int cls = i % 2 ? 1 : -1;
      rows.push_back({cls * 1.0 + noise(rng), noise(rng)});
      y.push_back(cls);
    }
    const SvmOptions opt{.gamma = 0.7, .C = 2.0, .tol = 1e-3};
    const auto res = svm_train_binary(rows, y, opt);
    c.expect(res.converged, "SMO converged");
    const auto gram = rbf_gram(rows, opt.gamma);
    const double eps = opt.tol + 1e-9;
    double balance = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double a = res.alpha[i];
      c.expect(a >= 0.0 && a <= opt.C, "box constraint");
      balance += a * y[i];
      double f = -res.rho;
      for (std::size_t j = 0; j < rows.size(); ++j) f += res.alpha[j] * y[j] * gram[i * rows.size() + j];
      const double margin = y[i] * f;
      if (a <= 0.0) c.expect(margin >= 1.0 - eps, "KKT at alpha = 0");
      else if (a >= opt.C) c.expect(margin <= 1.0 + eps, "KKT at alpha = C");
      else c.expect(std::abs(margin - 1.0) <= eps, "KKT on the margin");
    }
    c.near(balance, 0.0, 1e-9, "sum alpha y");
  }

  const auto train = blobs(rng, 40, 0.5);
  const auto test = blobs(rng, 40, 0.5);
  const Classifier blob_clf(svm_train(train, {.gamma = 0.5, .C = 10}), FeatureVariant::B);
  c.near(accuracy_on(blob_clf, train), 1.0, 0.0, "separable blobs, training");
  c.near(accuracy_on(blob_clf, test), 1.0, 0.0, "separable blobs, fresh draw");

  std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 0.15);
  auto circles = [&](std::size_t n) {
    auto ds = LabeledDataset::raw(2);
    for (std::size_t i = 0; i < n; ++i) {
      const bool inner = i % 2 == 0;
      const double r = (inner ? 1.0 : 3.0) + jitter(rng);
      const double t = angle(rng);
      ds.add({r * std::cos(t), r * std::sin(t)}, inner ? Label::Unripened : Label::Ripened);
    }
    return ds;
  };
  const auto ring_train = circles(200);
  const auto ring_test = circles(200);
  const Classifier ring_clf(svm_train(ring_train, {.gamma = 1.0, .C = 1000}), FeatureVariant::A);
  c.expect(accuracy_on(ring_clf, ring_test) >= 0.95, "concentric circles >= 95%");

  const auto noisy = blobs(rng, 25, 2.5);
  const auto a = svm_train(noisy, {.gamma = 0.3, .C = 5});
  const auto b = svm_train(noisy, {.gamma = 0.3, .C = 5});
  c.expect(a.machines.size() == 3, "three pairwise machines");
  c.expect(classifier_to_json(Classifier(a, FeatureVariant::B)) == classifier_to_json(Classifier(b, FeatureVariant::B)),
           "one-vs-one models identical");
  std::uniform_real_distribution<double> q(-8, 8);
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> x{q(rng), q(rng)};
    c.expect(svm_predict(a, x) == svm_predict(b, x), "one-vs-one predictions identical");
  }
}

// Truth t sits at x = 20 t; a hit lands on the next unclaimed truth, a miss far
// below. Scores fall with rank.
std::pair<std::vector<Detection>, std::vector<BBox>> pattern_case(const std::vector<bool>& hits, std::size_t truths) {
  std::vector<BBox> t;
  for (std::size_t i = 0; i < truths; ++i) t.push_back({static_cast<int>(20 * i), 0, 10, 10});
  std::vector<Detection> d;
  std::size_t next = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    const double score = 1.0 - 0.1 * static_cast<double>(k);
    if (hits[k]) d.push_back({t[next++], score});
    else d.push_back({{static_cast<int>(20 * k), 500, 10, 10}, score});
  }
  return {d, t};
}

void iou_ap(Checks& c) {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> pos(0, 20), ext(1, 12);
  for (int i = 0; i < 10000; ++i) {
    const BBox a{pos(rng), pos(rng), ext(rng), ext(rng)};
    const BBox b{pos(rng), pos(rng), ext(rng), ext(rng)};
    const double v = iou(a, b);
    c.expect(v == iou(b, a), "IoU symmetry");
    c.near(v, oracle::raster_iou({a.x, a.y, a.w, a.h}, {b.x, b.y, b.w, b.h}), 1e-12, "IoU vs raster");
  }

  // Ranked TP, FP, TP, TP over three truths.
  const std::vector<BBox> truths{{0, 0, 10, 10}, {40, 0, 10, 10}, {80, 0, 10, 10}};
  const std::vector<Detection> preds{
      {{0, 0, 10, 10}, 0.9}, {{20, 30, 10, 10}, 0.8}, {{41, 0, 10, 10}, 0.7}, {{80, 1, 10, 10}, 0.6}};
  const double ap = average_precision(preds, truths);
  c.near(ap, (1.0 + 2.0 / 3.0 + 3.0 / 4.0) / 3.0, 1e-12, "hand-case AP");
  c.expect(std::round(ap * 1e4) / 1e4 == 0.8056, "hand-case AP prints as 0.8056");

  std::size_t cases = 0;
  for (std::size_t n = 0; n <= 6; ++n) {
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
      std::vector<bool> hits(n);
      std::size_t tp = 0;
      for (std::size_t k = 0; k < n; ++k) tp += hits[k] = (bits >> k) & 1u;
      for (std::size_t g = std::max<std::size_t>(tp, 1); g <= tp + 2; ++g) {
        const auto [p, t] = pattern_case(hits, g);
        c.near(average_precision(p, t), oracle::ap_stepwise(hits, g), 1e-12, "exhaustive stepwise AP");
        c.near(average_precision(p, t, 0.5, ApConvention::Interpolated), oracle::ap_envelope(hits, g), 1e-12,
               "exhaustive interpolated AP");
        ++cases;
      }
    }
  }
  c.note(std::to_string(cases) + " exhaustive AP cases");
}

void decision_rule(Checks& c) {
  c.expect(ripeness_subclass(std::size_t{5}) == Subclass::MidRipened, "5 -> MidRipened");
  c.expect(ripeness_subclass(std::size_t{6}) == Subclass::WellRipened, "6 -> WellRipened");
  // Same boundary through the detector on drawn fruit.
  const SpotDetector det;
  for (const auto& [n, want] : {std::pair{5, Subclass::MidRipened}, std::pair{6, Subclass::WellRipened}}) {
    const auto f = testing_support::synthetic(Label::Ripened, 500 + n, want, n);
    const auto dets = det.detect(f.image, f.truth.fruit);
    c.expect(dets.size() == static_cast<std::size_t>(n), std::to_string(n) + " drawn spots detected");
    c.expect(ripeness_subclass(dets) == want, std::to_string(n) + " drawn spots subclass");
  }
}

// 300 unripened, 400 ripened (half mid, half well), 300 overripened.
struct Corpus {
  std::vector<RgbImage> images;
  std::vector<Label> labels;
};

Corpus make_corpus(std::uint64_t seed) {
  Corpus c;
  std::uint64_t s = seed;
  auto add = [&](Label l, std::optional<Subclass> sub) {
    const auto f = generate_synthetic(sample_spec(l, sub, ++s * 7919));
    c.images.push_back(f.image);
    c.labels.push_back(l);
  };
  for (int i = 0; i < 300; ++i) add(Label::Unripened, std::nullopt);
  for (int i = 0; i < 400; ++i) add(Label::Ripened, i % 2 ? Subclass::WellRipened : Subclass::MidRipened);
  for (int i = 0; i < 300; ++i) add(Label::Overripened, std::nullopt);
  return c;
}

const Classifier* g_svm_a = nullptr;

void end_to_end(Checks& c) {
  const auto corpus = make_corpus(2024);
  LabeledDataset a(FeatureVariant::A), b(FeatureVariant::B);
  std::vector<Label> kept;
  std::size_t unclassifiable = 0;
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    Mask fruit;
    try {
      fruit = segment(corpus.images[i]);
    } catch (const DegenerateInput&) {
      ++unclassifiable;
      continue;
    }
    const auto masked = apply_mask(corpus.images[i], fruit);
    a.add(build_feature_vector(masked, fruit, FeatureVariant::A), corpus.labels[i]);
    b.add(build_feature_vector(masked, fruit, FeatureVariant::B), corpus.labels[i]);
    kept.push_back(corpus.labels[i]);
  }
  c.expect(unclassifiable == 0, "every synthetic frame segments");
  const auto [train_idx, test_idx] = cli::stratified_split(kept, 0.2, 7);
  TrainOptions opt;
  opt.algorithm = Algorithm::Svm;
  opt.svm.gamma = 0.005;
  opt.svm.C = 1000;
  static const Classifier clf_a = train_classifier(a.subset(train_idx), opt);
  const Classifier clf_b = train_classifier(b.subset(train_idx), opt);
  g_svm_a = &clf_a;
  const double acc_a = accuracy_on(clf_a, a.subset(test_idx));
  const double acc_b = accuracy_on(clf_b, b.subset(test_idx));
  c.expect(acc_a >= 0.95, "held-out accuracy A = " + std::to_string(acc_a) + " < 0.95");
  c.expect(acc_a >= acc_b, "A below B");
  std::ostringstream n;
  n << "n_test " << test_idx.size() << ", A " << acc_a << ", B " << acc_b;
  c.note(n.str());
}

void transparency(Checks& c) {
  if (!g_svm_a) {
    TrainOptions opt;
    opt.svm.gamma = 0.005;
    opt.svm.C = 1000;
    static const Classifier fallback =
        train_classifier(testing_support::synthetic_dataset(40, 77, FeatureVariant::A), opt);
    g_svm_a = &fallback;
  }
  const Classifier& clf = *g_svm_a;
  const SpotDetector det;
  services::CloudService cloud(det);
  cloud.start({"127.0.0.1", 0});
  services::EdgeService edge(clf, services::Endpoint{"127.0.0.1", cloud.port()});
  edge.start({"127.0.0.1", 0});
  services::SimulatorConfig cfg;
  cfg.rate = 100;
  cfg.count = 200;
  cfg.seed = 31;
  cfg.buffer_limit = 256;
  cfg.drain_timeout_ms = 120000;
  services::Simulator sim({"127.0.0.1", edge.port()}, cfg);
  std::map<std::string, RgbImage> frames;
  sim.on_item([&](const services::LineItem& item) { frames[item.item_id] = item.image; });
  sim.run();

  const auto log = sim.routing_log();
  c.expect(log.size() == 200, "200 items logged");
  std::size_t ripened = 0, identical = 0;
  for (const auto& r : log) {
    if (!c.expect(r.result.has_value() && r.route.has_value(), "no result for " + r.item_id)) continue;
    const auto local = grade(frames.at(r.item_id), clf, det);
    identical += c.expect(same_outcome(local, *r.result), "loopback differs for " + r.item_id);
    c.expect(*r.route == r.result->route, "switch route differs for " + r.item_id);
    ripened += local.label == Label::Ripened;
  }
  c.expect(cloud.requests() == ripened, "cloud requests " + std::to_string(cloud.requests()) + " != ripened " +
                                            std::to_string(ripened));
  c.expect(edge.cloud_requests() == ripened, "edge request counter differs");
  c.note(std::to_string(identical) + "/200 identical, " + std::to_string(ripened) + " cloud requests");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"metrics-ripeness", 1.0, ripeness_counts},
      {"metrics-subclass", 1.0, subclass_counts},
      {"hsv-reference", 1.0, hsv},
      {"lbp", 5.0, lbp_checks},
      {"kmeans", 10.0, kmeans_checks},
      {"svm", 30.0, svm_checks},
      {"iou-ap", 10.0, iou_ap},
      {"decision-rule", 10.0, decision_rule},
      {"end-to-end", 600.0, end_to_end},
      {"transparency", 300.0, transparency},
  };
  std::size_t failed = 0;
  for (const auto& c : criteria) failed += !run_criterion(c);
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
