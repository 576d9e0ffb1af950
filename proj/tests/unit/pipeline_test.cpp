#include <gtest/gtest.h>

#include "gradeline/pipeline.hpp"
#include "gradeline/synthetic.hpp"
#include "support/test_support.hpp"

using namespace gradeline;
using testing_support::shared_classifier;
using testing_support::synthetic;

namespace {

// Detector that is never available.
class NullDetector final : public Detector {
 public:
  std::vector<Detection> detect(const RgbImage&, const Mask&) const override { return {}; }
  std::string name() const override { return "null"; }
};

}  // namespace

TEST(Pipeline, UnripenedGoesToMarketWithoutLayer2) {
  const SpotDetector spots;
  const CountingDetector counter(spots);
  const auto r = grade(synthetic(Label::Unripened, 3).image, shared_classifier(), counter);
  EXPECT_EQ(r.label, Label::Unripened);
  EXPECT_FALSE(r.layer2_invoked);
  EXPECT_EQ(r.route, Route::Market);
  EXPECT_EQ(counter.calls(), 0u);
}

TEST(Pipeline, OverripenedIsDefective) {
  const SpotDetector spots;
  const CountingDetector counter(spots);
  const auto r = grade(synthetic(Label::Overripened, 4).image, shared_classifier(), counter);
  EXPECT_EQ(r.label, Label::Overripened);
  EXPECT_FALSE(r.layer2_invoked);
  EXPECT_EQ(r.route, Route::Defective);
  EXPECT_EQ(counter.calls(), 0u);
}

TEST(Pipeline, SevenSpotsIsWellRipened) {
  const SpotDetector spots;
  const CountingDetector counter(spots);
  const auto f = synthetic(Label::Ripened, 5, Subclass::WellRipened, 7);
  const auto r = grade(f.image, shared_classifier(), counter);
  EXPECT_EQ(r.label, Label::Ripened);
  EXPECT_TRUE(r.layer2_invoked);
  EXPECT_EQ(r.subclass, Subclass::WellRipened);
  EXPECT_EQ(r.detections.size(), 7u);
  EXPECT_EQ(r.route, Route::Market);
  EXPECT_EQ(r.note, "priority sale");
  EXPECT_EQ(counter.calls(), 1u);
}

TEST(Pipeline, DetectorRunsOnlyForRipened) {
  const SpotDetector spots;
  const CountingDetector counter(spots);
  std::size_t ripened = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    for (auto label : kAllLabels) {
      const auto r = grade(synthetic(label, seed * 17).image, shared_classifier(), counter);
      ripened += r.label == Label::Ripened;
      EXPECT_EQ(r.layer2_invoked, r.label == Label::Ripened);
    }
  }
  EXPECT_EQ(counter.calls(), ripened);
}

TEST(Pipeline, Deterministic) {
  const SpotDetector spots;
  const auto img = synthetic(Label::Ripened, 8, Subclass::MidRipened, 4).image;
  const auto a = grade(img, shared_classifier(), spots);
  const auto b = grade(img, shared_classifier(), spots);
  EXPECT_TRUE(same_outcome(a, b));
  EXPECT_EQ(a.subclass, Subclass::MidRipened);
}

TEST(Pipeline, UniformFrameIsUnclassifiable) {
  const NullDetector none;
  const CountingDetector counter(none);
  const auto r = grade(RgbImage(64, 48, Rgb{90, 90, 90}), shared_classifier(), counter);
  EXPECT_TRUE(r.unclassifiable);
  EXPECT_FALSE(r.label.has_value());
  EXPECT_EQ(r.route, Route::Defective);
  EXPECT_EQ(counter.calls(), 0u);
}

TEST(Pipeline, MissingLayer2Degrades) {
  const auto img = synthetic(Label::Ripened, 10, Subclass::MidRipened, 2).image;
  auto [r, fruit] = grade_first_layer(img, shared_classifier());
  ASSERT_EQ(r.label, Label::Ripened);
  apply_layer2(r, std::nullopt, {});
  EXPECT_TRUE(r.degraded);
  EXPECT_FALSE(r.layer2_invoked);
  EXPECT_EQ(r.route, Route::Defective);
}

TEST(Pipeline, PolicyTableIsHonoured) {
  PipelineConfig cfg;
  cfg.policy.unripened = Route::Defective;
  const SpotDetector spots;
  EXPECT_EQ(grade(synthetic(Label::Unripened, 11).image, shared_classifier(), spots, cfg).route, Route::Defective);
}

TEST(Pipeline, JsonRoundTrip) {
  const SpotDetector spots;
  for (const auto& img : {synthetic(Label::Ripened, 12, Subclass::WellRipened, 6).image,
                          RgbImage(32, 32, Rgb{1, 2, 3})}) {
    const auto r = grade(img, shared_classifier(), spots);
    const auto back = grade_result_from_json(to_json(r));
    EXPECT_TRUE(same_outcome(r, back));
  }
  GradeResult u;
  u.unclassifiable = true;
  EXPECT_EQ(to_json(u).at("label"), "Unclassifiable");
}
