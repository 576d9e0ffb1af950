#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "gradeline/classifiers/dataset.hpp"

namespace gradeline {

inline constexpr double kNbVarianceFloor = 1e-9;

// Gaussian naive Bayes. Classes absent from training have an empty mean
// vector and are never predicted.
struct NbModel {
  std::size_t dim = 0;
  std::array<double, kNumLabels> priors{};
  std::array<std::vector<double>, kNumLabels> means;
  std::array<std::vector<double>, kNumLabels> variances;  // unbiased, floored
};

inline NbModel nb_train(const LabeledDataset& ds) {
  require_trainable(ds);
  const auto counts = ds.class_counts();
  NbModel m;
  m.dim = ds.dim();
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (counts[c] == 0) continue;
    if (counts[c] < 2) throw InvalidArgument("naive bayes: every present class needs >= 2 samples");
    m.priors[c] = static_cast<double>(counts[c]) / static_cast<double>(ds.size());
    m.means[c].assign(m.dim, 0.0);
    m.variances[c].assign(m.dim, 0.0);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = label_index(ds.label(i));
    const auto r = ds.row(i);
    for (std::size_t d = 0; d < m.dim; ++d) m.means[c][d] += r[d];
  }
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    for (auto& v : m.means[c]) v /= static_cast<double>(counts[c]);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = label_index(ds.label(i));
    const auto r = ds.row(i);
    for (std::size_t d = 0; d < m.dim; ++d) {
      const double diff = r[d] - m.means[c][d];
      m.variances[c][d] += diff * diff;
    }
  }
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    for (auto& v : m.variances[c]) {
      v = std::max(v / static_cast<double>(counts[c] - 1), kNbVarianceFloor);
    }
  }
  return m;
}

// log P(Y) + sum_i log N(x_i; mu, sigma^2) for every trained class;
// -infinity for classes not seen in training.
inline std::array<double, kNumLabels> nb_log_posteriors(const NbModel& m, std::span<const double> x) {
  require_dim(m.dim, x);
  std::array<double, kNumLabels> out;
  out.fill(-std::numeric_limits<double>::infinity());
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (m.means[c].empty()) continue;
    double s = std::log(m.priors[c]);
    for (std::size_t d = 0; d < m.dim; ++d) {
      const double var = m.variances[c][d];
      const double diff = x[d] - m.means[c][d];
      s += -0.5 * (log_2pi + std::log(var)) - diff * diff / (2.0 * var);
    }
    out[c] = s;
  }
  return out;
}

// Ties resolve to label order.
inline Label nb_predict(const NbModel& m, std::span<const double> x) {
  const auto lp = nb_log_posteriors(m, x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumLabels; ++c) {
    if (lp[c] > lp[best]) best = c;
  }
  return label_from_index(best);
}

}  // namespace gradeline
