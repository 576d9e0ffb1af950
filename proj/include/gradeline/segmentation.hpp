#pragma once

// Fruit/background separation: K-means over pre-processed RGB pixels, the
// border-majority background rule and largest-component cleanup.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "gradeline/error.hpp"
#include "gradeline/imaging.hpp"
#include "gradeline/mask.hpp"
#include "gradeline/regions.hpp"

namespace gradeline {

// Input that cannot be segmented (e.g. a uniform frame).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Row-major n x dim matrix of points.
struct PointSet {
  std::vector<double> values;
  std::size_t dim = 0;

  std::size_t size() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }

  static PointSet from_rows(const std::vector<std::vector<double>>& rows) {
    PointSet ps;
    if (rows.empty()) return ps;
    ps.dim = rows.front().size();
    for (const auto& r : rows) {
      if (r.size() != ps.dim) throw InvalidArgument("PointSet rows must share one dimension");
      ps.values.insert(ps.values.end(), r.begin(), r.end());
    }
    return ps;
  }
};

struct KMeansOptions {
  std::size_t k = 2;
  std::size_t max_iter = 100;
  double tol = 1e-4;  // stop when every centroid moves less than this
  std::uint64_t seed = 0;
};

struct ClusterModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;          // k x dim
  std::vector<std::size_t> assignments;   // one per point
  double wcss = 0.0;
  std::vector<double> wcss_history;       // after every assignment step
  std::size_t iterations = 0;

  std::span<const double> centroid(std::size_t c) const { return {centroids.data() + c * dim, dim}; }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline std::size_t count_distinct_rows(const PointSet& pts) {
  std::vector<std::size_t> order(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = pts.row(a);
    auto rb = pts.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

namespace detail {

// Assigns each point to its nearest centroid (ties to the lower index) and
// returns the resulting WCSS.
inline double assign_points(const PointSet& pts, ClusterModel& m) {
  double wcss = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < m.k; ++c) {
      const double d = squared_distance(pts.row(i), m.centroid(c));
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    m.assignments[i] = best_c;
    wcss += best;
  }
  return wcss;
}

// k-means++ seeding driven by a seeded mt19937_64.
inline std::vector<double> seed_centroids(const PointSet& pts, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = pts.size();
  std::vector<double> centroids;
  centroids.reserve(k * pts.dim);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  const auto r0 = pts.row(first(rng));
  centroids.insert(centroids.end(), r0.begin(), r0.end());

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    std::span<const double> last(centroids.data() + (c - 1) * pts.dim, pts.dim);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(pts.row(i), last));
      total += d2[i];
    }
    const double target = unit(rng) * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc >= target) break;
    }
    const auto r = pts.row(pick);
    centroids.insert(centroids.end(), r.begin(), r.end());
  }
  return centroids;
}

}  // namespace detail

// Lloyd's algorithm from k-means++ seeding. Deterministic for a given seed.
inline ClusterModel kmeans(const PointSet& pts, const KMeansOptions& opt) {
  if (pts.size() == 0 || pts.dim == 0) throw InvalidArgument("kmeans: empty input");
  if (opt.k == 0) throw InvalidArgument("kmeans: k must be >= 1");
  if (opt.k > count_distinct_rows(pts)) {
    throw DegenerateInput("kmeans: k exceeds the number of distinct points");
  }

  ClusterModel m;
  m.k = opt.k;
  m.dim = pts.dim;
  m.centroids = detail::seed_centroids(pts, opt.k, opt.seed);
  m.assignments.assign(pts.size(), 0);

  std::vector<double> sums(m.k * m.dim);
  std::vector<std::size_t> counts(m.k);
  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    m.wcss_history.push_back(detail::assign_points(pts, m));
    ++m.iterations;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto c = m.assignments[i];
      ++counts[c];
      const auto r = pts.row(i);
      for (std::size_t d = 0; d < m.dim; ++d) sums[c * m.dim + d] += r[d];
    }
    double max_move = 0.0;
    for (std::size_t c = 0; c < m.k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      double move = 0.0;
      for (std::size_t d = 0; d < m.dim; ++d) {
        const double next = sums[c * m.dim + d] / static_cast<double>(counts[c]);
        const double delta = next - m.centroids[c * m.dim + d];
        move += delta * delta;
        m.centroids[c * m.dim + d] = next;
      }
      max_move = std::max(max_move, std::sqrt(move));
    }
    if (max_move < opt.tol) break;
  }
  m.wcss = detail::assign_points(pts, m);
  m.wcss_history.push_back(m.wcss);
  return m;
}

struct SegmentationConfig {
  std::size_t k = 2;
  int window = 3;
  int rank = 4;  // median of a 3x3 window
  std::size_t max_iter = 50;
  double tol = 1e-3;
  std::uint64_t seed = 0;
  bool fill_holes = true;
};

inline PointSet rgb_points(const RgbImage& img) {
  PointSet ps;
  ps.dim = 3;
  ps.values.reserve(img.size() * 3);
  for (const auto& p : img.pixels()) {
    ps.values.push_back(p.r);
    ps.values.push_back(p.g);
    ps.values.push_back(p.b);
  }
  return ps;
}

// Mask of the fruit. The background cluster is the one owning the most
// image-border pixels; the remaining clusters form the foreground, reduced
// to its largest 4-connected component (and hole-filled when enabled).
// Throws DegenerateInput when no foreground can be separated.
inline Mask segment(const RgbImage& img, const SegmentationConfig& cfg = {}) {
  if (img.empty()) throw InvalidArgument("segment: empty image");
  const RgbImage pre = preprocess_rgb(img, cfg.window, cfg.rank);
  const PointSet pts = rgb_points(pre);
  const ClusterModel model = kmeans(pts, KMeansOptions{cfg.k, cfg.max_iter, cfg.tol, cfg.seed});

  const int w = img.width();
  const int h = img.height();
  std::vector<std::size_t> border(model.k, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
        ++border[model.assignments[static_cast<std::size_t>(y) * w + x]];
      }
    }
  }
  const auto background = static_cast<std::size_t>(
      std::distance(border.begin(), std::max_element(border.begin(), border.end())));

  Mask fg(w, h);
  for (std::size_t i = 0; i < fg.size(); ++i) fg.pixels()[i] = model.assignments[i] != background ? 1 : 0;
  Mask out = largest_component(fg);
  if (cfg.fill_holes) out = fill_holes(out);
  if (count_foreground(out) == 0) throw DegenerateInput("segment: empty foreground");
  return out;
}

// Background pixels become black; foreground pixels are kept.
inline RgbImage apply_mask(const RgbImage& img, const Mask& m) {
  if (!img.same_shape(m)) throw InvalidArgument("apply_mask: dimension mismatch");
  RgbImage out = img;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!m.pixels()[i]) out.pixels()[i] = Rgb{0, 0, 0};
  }
  return out;
}

}  // namespace gradeline
