#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace oracle {

struct Partition {
  std::vector<int> side;
  double wcss = std::numeric_limits<double>::infinity();
};

inline double partition_wcss(const std::vector<std::vector<double>>& pts, const std::vector<int>& side) {
  const std::size_t dim = pts.front().size();
  double total = 0.0;
  for (int s = 0; s < 2; ++s) {
    std::vector<double> mean(dim, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (side[i] != s) continue;
      for (std::size_t d = 0; d < dim; ++d) mean[d] += pts[i][d];
      ++n;
    }
    if (n == 0) return std::numeric_limits<double>::infinity();
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (side[i] != s) continue;
      for (std::size_t d = 0; d < dim; ++d) total += (pts[i][d] - mean[d]) * (pts[i][d] - mean[d]);
    }
  }
  return total;
}

// Every split into two non-empty groups (point 0 pinned to group 0).
inline Partition best_two_partition(const std::vector<std::vector<double>>& pts) {
  const std::size_t n = pts.size();
  Partition best;
  for (std::uint32_t bits = 1; bits < (1u << (n - 1)); ++bits) {
    std::vector<int> side(n, 0);
    for (std::size_t i = 1; i < n; ++i) side[i] = (bits >> (i - 1)) & 1u;
    const double w = partition_wcss(pts, side);
    if (w < best.wcss) best = {side, w};
  }
  return best;
}

}  // namespace oracle
