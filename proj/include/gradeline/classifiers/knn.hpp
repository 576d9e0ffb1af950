#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gradeline/classifiers/dataset.hpp"

namespace gradeline {

enum class DistanceMetric { Euclidean, Manhattan };

inline std::string to_string(DistanceMetric m) {
  return m == DistanceMetric::Euclidean ? "euclidean" : "manhattan";
}

inline DistanceMetric parse_metric(std::string_view s) {
  if (s == "euclidean") return DistanceMetric::Euclidean;
  if (s == "manhattan") return DistanceMetric::Manhattan;
  throw InvalidArgument("unknown distance metric '" + std::string(s) + "'");
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double manhattan_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double distance(DistanceMetric m, std::span<const double> a, std::span<const double> b) {
  return m == DistanceMetric::Euclidean ? euclidean_distance(a, b) : manhattan_distance(a, b);
}

struct KnnModel {
  std::size_t k = 3;
  DistanceMetric metric = DistanceMetric::Euclidean;
  std::size_t dim = 0;
  std::vector<std::vector<double>> samples;
  std::vector<Label> labels;
};

inline KnnModel knn_train(const LabeledDataset& ds, std::size_t k,
                          DistanceMetric metric = DistanceMetric::Euclidean) {
  require_trainable(ds);
  if (k == 0) throw InvalidArgument("knn: k must be >= 1");
  if (k > ds.size()) throw InvalidArgument("knn: k exceeds the number of training samples");
  return KnnModel{k, metric, ds.dim(), ds.rows(), ds.labels()};
}

// Majority label among the k nearest samples. Vote ties go to the label with
// the smaller summed distance, then to label order.
inline Label knn_predict(const KnnModel& m, std::span<const double> x) {
  require_dim(m.dim, x);
  const std::size_t n = m.samples.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = distance(m.metric, x, m.samples[i]);

  // Sort key (distance, label, sample content) so equidistant neighbours are
  // chosen independently of training order.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto closer = [&](std::size_t a, std::size_t b) {
    if (d[a] != d[b]) return d[a] < d[b];
    if (m.labels[a] != m.labels[b]) return m.labels[a] < m.labels[b];
    return m.samples[a] < m.samples[b];
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m.k), idx.end(), closer);

  std::array<std::size_t, kNumLabels> votes{};
  std::array<double, kNumLabels> dist_sum{};
  for (std::size_t i = 0; i < m.k; ++i) {
    const auto c = label_index(m.labels[idx[i]]);
    ++votes[c];
    dist_sum[c] += d[idx[i]];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumLabels; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && votes[c] > 0 && dist_sum[c] < dist_sum[best])) {
      best = c;
    }
  }
  return label_from_index(best);
}

}  // namespace gradeline
