#pragma once

// Random forest of Gini-split decision trees. Each tree draws a bootstrap
// resample and considers ceil(sqrt(d)) random dimensions per node; trees grow
// until their leaves are pure (or the remaining samples are identical).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "gradeline/classifiers/dataset.hpp"

namespace gradeline {

using ClassCounts = std::array<std::uint32_t, kNumLabels>;

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  ClassCounts counts{};

  bool is_leaf() const noexcept { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestModel {
  std::size_t dim = 0;
  std::vector<DecisionTree> trees;
};

struct ForestOptions {
  std::size_t trees = 100;
  std::uint64_t seed = 0;
  bool bootstrap = true;
  std::size_t max_features = 0;  // 0 -> ceil(sqrt(dim))
};

inline std::size_t plurality(const ClassCounts& c) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumLabels; ++k) {
    if (c[k] > c[best]) best = k;
  }
  return best;
}

namespace detail {

inline double gini(const ClassCounts& c, std::uint32_t n) {
  if (n == 0) return 0.0;
  double s = 1.0;
  for (auto v : c) {
    const double p = static_cast<double>(v) / n;
    s -= p * p;
  }
  return s;
}

// splitmix64 step, used to derive independent per-tree seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class TreeBuilder {
 public:
  TreeBuilder(const LabeledDataset& ds, std::size_t max_features, std::uint64_t seed)
      : ds_(ds), max_features_(max_features), rng_(seed) {}

  DecisionTree build(std::vector<std::size_t> sample) {
    DecisionTree tree;
    grow(tree, std::move(sample));
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  int grow(DecisionTree& tree, std::vector<std::size_t> sample) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    ClassCounts counts{};
    for (auto i : sample) ++counts[label_index(ds_.label(i))];
    tree.nodes[static_cast<std::size_t>(id)].counts = counts;

    const auto n = static_cast<std::uint32_t>(sample.size());
    if (gini(counts, n) <= 0.0) return id;

    const Split split = find_split(sample, counts);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto i : sample) {
      (ds_.row(i)[static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(i);
    }
    sample.clear();
    sample.shrink_to_fit();
    const int l = grow(tree, std::move(left));
    const int r = grow(tree, std::move(right));
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  // Best Gini split over a random subset of features; if none of them can
  // separate the node, the remaining features are tried in random order.
  Split find_split(const std::vector<std::size_t>& sample, const ClassCounts& total) {
    std::vector<std::size_t> features(ds_.dim());
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng_);

    Split best;
    best.impurity = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, std::size_t>> values(sample.size());
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      if (fi >= max_features_ && best.feature >= 0) break;
      const auto f = features[fi];
      for (std::size_t k = 0; k < sample.size(); ++k) {
        values[k] = {ds_.row(sample[k])[f], label_index(ds_.label(sample[k]))};
      }
      std::sort(values.begin(), values.end());
      ClassCounts left{};
      const auto n = static_cast<std::uint32_t>(sample.size());
      for (std::size_t k = 0; k + 1 < values.size(); ++k) {
        ++left[values[k].second];
        if (values[k].first == values[k + 1].first) continue;
        ClassCounts right{};
        for (std::size_t c = 0; c < kNumLabels; ++c) right[c] = total[c] - left[c];
        const auto nl = static_cast<std::uint32_t>(k + 1);
        const auto nr = n - nl;
        const double imp = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
        if (imp < best.impurity) {
          best.impurity = imp;
          best.feature = static_cast<int>(f);
          best.threshold = values[k].first + (values[k + 1].first - values[k].first) / 2.0;
          if (!(best.threshold < values[k + 1].first)) best.threshold = values[k].first;
        }
      }
    }
    return best;
  }

  const LabeledDataset& ds_;
  std::size_t max_features_;
  std::mt19937_64 rng_;
};

}  // namespace detail

inline ForestModel rf_train(const LabeledDataset& ds, const ForestOptions& opt = {}) {
  require_trainable(ds);
  if (opt.trees == 0) throw InvalidArgument("random forest: tree count must be >= 1");
  const std::size_t mtry = opt.max_features > 0
                               ? std::min(opt.max_features, ds.dim())
                               : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(ds.dim()))));
  ForestModel m;
  m.dim = ds.dim();
  m.trees.reserve(opt.trees);
  for (std::size_t t = 0; t < opt.trees; ++t) {
    const std::uint64_t tree_seed = detail::mix_seed(opt.seed ^ detail::mix_seed(t));
    std::mt19937_64 rng(tree_seed);
    std::vector<std::size_t> sample(ds.size());
    if (opt.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
      for (auto& s : sample) s = pick(rng);
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    detail::TreeBuilder builder(ds, mtry, rng());
    m.trees.push_back(builder.build(std::move(sample)));
  }
  return m;
}

inline const TreeNode& tree_leaf(const DecisionTree& tree, std::span<const double> x) {
  std::size_t node = 0;
  while (!tree.nodes[node].is_leaf()) {
    const auto& n = tree.nodes[node];
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return tree.nodes[node];
}

// Plurality vote of the trees; ties go to label order.
inline Label rf_predict(const ForestModel& m, std::span<const double> x) {
  require_dim(m.dim, x);
  ClassCounts votes{};
  for (const auto& tree : m.trees) ++votes[plurality(tree_leaf(tree, x).counts)];
  return label_from_index(plurality(votes));
}

}  // namespace gradeline
