#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradeline/error.hpp"
#include "gradeline/features.hpp"

namespace gradeline {

// First-layer ripeness classes, in confusion-matrix order.
enum class Label { Unripened = 0, Ripened = 1, Overripened = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kAllLabels = {Label::Unripened, Label::Ripened,
                                                             Label::Overripened};

inline std::size_t label_index(Label l) { return static_cast<std::size_t>(l); }

inline Label label_from_index(std::size_t i) {
  if (i >= kNumLabels) throw InvalidArgument("label index out of range");
  return static_cast<Label>(i);
}

inline std::string to_string(Label l) {
  switch (l) {
    case Label::Unripened: return "Unripened";
    case Label::Ripened: return "Ripened";
    case Label::Overripened: return "Overripened";
  }
  return "?";
}

inline Label parse_label(std::string_view s) {
  for (auto l : kAllLabels) {
    if (to_string(l) == s) return l;
  }
  if (s == "unripened") return Label::Unripened;
  if (s == "ripened") return Label::Ripened;
  if (s == "overripened" || s == "over-ripened" || s == "Over-ripened") return Label::Overripened;
  throw InvalidArgument("unknown label '" + std::string(s) + "'");
}

// Homogeneous set of labelled feature rows.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(FeatureVariant variant) : variant_(variant), dim_(feature_dims(variant)) {}

  // Free-dimension dataset (toy problems, tests). Every row must have `dim`
  // entries.
  static LabeledDataset raw(std::size_t dim) {
    LabeledDataset ds;
    ds.dim_ = dim;
    return ds;
  }

  void add(const FeatureVector& fv, Label label) {
    if (fv.variant != variant_ || fv.values.size() != dim_) {
      throw InvalidArgument("dataset sample does not match the dataset variant");
    }
    rows_.push_back(fv.values);
    labels_.push_back(label);
  }

  void add(std::vector<double> row, Label label) {
    if (row.size() != dim_) throw InvalidArgument("dataset row has the wrong dimension");
    rows_.push_back(std::move(row));
    labels_.push_back(label);
  }

  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  FeatureVariant variant() const noexcept { return variant_; }
  std::span<const double> row(std::size_t i) const { return rows_[i]; }
  const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }
  Label label(std::size_t i) const { return labels_[i]; }
  const std::vector<Label>& labels() const noexcept { return labels_; }

  std::array<std::size_t, kNumLabels> class_counts() const {
    std::array<std::size_t, kNumLabels> c{};
    for (auto l : labels_) ++c[label_index(l)];
    return c;
  }

  LabeledDataset subset(std::span<const std::size_t> idx) const {
    LabeledDataset out = *this;
    out.rows_.clear();
    out.labels_.clear();
    for (auto i : idx) {
      out.rows_.push_back(rows_.at(i));
      out.labels_.push_back(labels_.at(i));
    }
    return out;
  }

 private:
  FeatureVariant variant_ = FeatureVariant::A;
  std::size_t dim_ = 0;
  std::vector<std::vector<double>> rows_;
  std::vector<Label> labels_;
};

inline void require_trainable(const LabeledDataset& ds) {
  if (ds.empty()) throw InvalidArgument("training dataset is empty");
}

inline void require_dim(std::size_t expected, std::span<const double> x) {
  if (x.size() != expected) throw InvalidArgument("query has the wrong feature dimension");
}

}  // namespace gradeline
