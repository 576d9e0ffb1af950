#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace oracle {

// Ranked hit pattern (true = the prediction at that rank found a new truth).
// Non-interpolated AP: mean over truths of the precision at the rank where
// each truth was found; unfound truths contribute zero.
inline double ap_stepwise(const std::vector<bool>& hits, std::size_t num_truths) {
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    if (!hits[k]) continue;
    ++tp;
    sum += static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(num_truths);
}

// Area under the upper envelope of the PR points, integrated over recall
// cells of width 1/num_truths.
inline double ap_envelope(const std::vector<bool>& hits, std::size_t num_truths) {
  std::vector<std::pair<double, double>> pts;  // (recall, precision)
  std::size_t tp = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    tp += hits[k];
    pts.emplace_back(static_cast<double>(tp) / num_truths, static_cast<double>(tp) / (k + 1));
  }
  double area = 0.0;
  for (std::size_t cell = 1; cell <= num_truths; ++cell) {
    const double r = static_cast<double>(cell) / num_truths;
    double best = 0.0;
    for (const auto& [rec, prec] : pts) {
      if (rec >= r - 1e-12) best = std::max(best, prec);
    }
    area += best / static_cast<double>(num_truths);
  }
  return area;
}

}  // namespace oracle
