#include <gtest/gtest.h>

#include <random>

#include "gradeline/segmentation.hpp"
#include "gradeline/synthetic.hpp"
#include "oracles/kmeans_bruteforce.hpp"
#include "support/test_support.hpp"

using namespace gradeline;

namespace {

std::vector<std::vector<double>> random_points(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
  for (auto& r : rows) {
    for (auto& v : r) v = d(rng);
  }
  return rows;
}

}  // namespace

TEST(KMeans, SingleClusterIsTheMean) {
  const auto m = kmeans(PointSet::from_rows({{0, 0}, {2, 0}}), {.k = 1});
  EXPECT_DOUBLE_EQ(m.centroids[0], 1.0);
  EXPECT_DOUBLE_EQ(m.centroids[1], 0.0);
  EXPECT_DOUBLE_EQ(m.wcss, 2.0);
}

TEST(KMeans, TwoObviousGroups) {
  const auto m = kmeans(PointSet::from_rows({{0, 0}, {0, 1}, {10, 10}, {10, 11}}), {.k = 2});
  EXPECT_EQ(m.assignments[0], m.assignments[1]);
  EXPECT_EQ(m.assignments[2], m.assignments[3]);
  EXPECT_NE(m.assignments[0], m.assignments[2]);
  EXPECT_DOUBLE_EQ(m.wcss, 1.0);
}

TEST(KMeans, OneClusterPerPointHasZeroCost) {
  const auto m = kmeans(PointSet::from_rows({{0, 0}, {3, 1}, {7, 2}, {1, 9}}), {.k = 4});
  EXPECT_DOUBLE_EQ(m.wcss, 0.0);
}

TEST(KMeans, RejectsBadInput) {
  EXPECT_THROW(kmeans(PointSet{}, {.k = 1}), InvalidArgument);
  EXPECT_THROW(kmeans(PointSet::from_rows({{1}, {2}}), {.k = 0}), InvalidArgument);
  EXPECT_THROW(kmeans(PointSet::from_rows({{1}, {1}, {1}}), {.k = 2}), DegenerateInput);
}

TEST(KMeans, WcssNeverIncreases) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pts = PointSet::from_rows(random_points(rng, 20 + trial % 30, 1 + trial % 3));
    const auto m = kmeans(pts, {.k = 2 + static_cast<std::size_t>(trial % 4), .seed = static_cast<std::uint64_t>(trial)});
    ASSERT_FALSE(m.wcss_history.empty());
    for (std::size_t i = 1; i < m.wcss_history.size(); ++i) {
      EXPECT_LE(m.wcss_history[i], m.wcss_history[i - 1] + 1e-9) << "trial " << trial << " step " << i;
    }
    EXPECT_DOUBLE_EQ(m.wcss, m.wcss_history.back());
  }
}

TEST(KMeans, SameSeedSameModel) {
  std::mt19937_64 rng(12);
  const auto pts = PointSet::from_rows(random_points(rng, 50, 3));
  const auto a = kmeans(pts, {.k = 3, .seed = 9});
  const auto b = kmeans(pts, {.k = 3, .seed = 9});
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(KMeans, FindsBestPartitionOnSmallClusteredSets) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> noise(0.0, 0.6);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 4 + trial % 9;  // up to 12 points
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = i % 2 ? 5.0 : -5.0;
      rows.push_back({c + noise(rng), c + noise(rng)});
    }
    const auto best = oracle::best_two_partition(rows);
    const auto m = kmeans(PointSet::from_rows(rows), {.k = 2, .seed = static_cast<std::uint64_t>(trial)});
    EXPECT_NEAR(m.wcss, best.wcss, 1e-9) << "trial " << trial;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(m.assignments[i] == m.assignments[0], best.side[i] == best.side[0]);
    }
  }
}

TEST(Segment, UniformImageIsDegenerate) {
  EXPECT_THROW(segment(RgbImage(30, 20, Rgb{120, 120, 120})), DegenerateInput);
  EXPECT_THROW(segment(RgbImage()), InvalidArgument);
}

TEST(Segment, YellowEllipseOnGray) {
  const Ellipse e{40, 30, 24, 14, 15};
  const Mask truth = rasterize(e, 80, 60);
  RgbImage img(80, 60, Rgb{200, 200, 200});
  for (int y = 0; y < 60; ++y) {
    for (int x = 0; x < 80; ++x) {
      if (truth.at(x, y)) img.at(x, y) = {230, 200, 30};
    }
  }
  EXPECT_GE(mask_iou(segment(img), truth), 0.95);
}

TEST(Segment, SpeckExcludedByLargestComponent) {
  const Mask truth = rasterize(Ellipse{30, 30, 18, 12, 0}, 80, 60);
  RgbImage img(80, 60, Rgb{200, 200, 200});
  for (int y = 0; y < 60; ++y) {
    for (int x = 0; x < 80; ++x) {
      if (truth.at(x, y)) img.at(x, y) = {230, 200, 30};
    }
  }
  for (int y = 48; y < 51; ++y) {
    for (int x = 72; x < 75; ++x) img.at(x, y) = {230, 200, 30};
  }
  const Mask m = segment(img);
  EXPECT_EQ(m.at(73, 49), 0);
  EXPECT_GE(mask_iou(m, truth), 0.95);
}

TEST(Segment, SyntheticFramesSegmentWell) {
  for (auto label : kAllLabels) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const auto f = testing_support::synthetic(label, seed * 31);
      EXPECT_GE(mask_iou(segment(f.image), f.truth.fruit), 0.95) << to_string(label) << " seed " << seed;
    }
  }
}

TEST(ApplyMask, FullEmptyAndHalf) {
  std::mt19937_64 rng(14);
  const auto img = testing_support::random_rgb(rng, 6, 4);
  EXPECT_EQ(apply_mask(img, full_mask(6, 4)), img);
  EXPECT_EQ(apply_mask(img, Mask(6, 4)), RgbImage(6, 4, Rgb{0, 0, 0}));
  Mask half(6, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 3; ++x) half.at(x, y) = 1;
  }
  const auto out = apply_mask(img, half);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) EXPECT_EQ(out.at(x, y), x < 3 ? img.at(x, y) : Rgb{}) << x << "," << y;
  }
  EXPECT_THROW(apply_mask(img, Mask(5, 4)), InvalidArgument);
}
