#pragma once

// Colour (hue/value) and texture (local binary pattern) features, and the
// two feature-vector layouts fed to the first-layer classifiers:
//   A = [mean hue / 360, mean value, 256-bin LBP histogram]  (258 dims)
//   B = [mean hue / 360, mean value]                           (2 dims)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/error.hpp"
#include "gradeline/imaging.hpp"
#include "gradeline/mask.hpp"

namespace gradeline {

struct Hsv {
  double h = 0.0;  // degrees, [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

// V = max(R,G,B)/255; S = 1 - 3 min(R,G,B)/(R+G+B); H from the arccos
// hue angle, mirrored to 360 - theta when G < B. Achromatic pixels (S = 0
// or a zero hue denominator) get H = 0.
inline Hsv rgb_to_hsv(int r, int g, int b) {
  if (r < 0 || g < 0 || b < 0 || r > 255 || g > 255 || b > 255) {
    throw InvalidArgument("rgb_to_hsv: channel out of [0,255]");
  }
  Hsv out;
  out.v = std::max({r, g, b}) / 255.0;
  const int sum = r + g + b;
  if (sum == 0) return out;
  out.s = 1.0 - 3.0 * std::min({r, g, b}) / static_cast<double>(sum);
  if (out.s <= 0.0) {
    out.s = 0.0;
    return out;
  }
  const double rg = r - g;
  const double rb = r - b;
  const double gb = g - b;
  const double den = 2.0 * std::sqrt(rg * rg + rb * gb);
  if (den == 0.0) return out;
  const double arg = std::clamp((rg + rb) / den, -1.0, 1.0);
  // acos carries last-bit noise (acos(-0.5) lands just above 2pi/3); snap
  // to a 1e-9 degree grid so the exact angles stay exact.
  const double theta = std::round(std::acos(arg) * 180.0 / std::numbers::pi * 1e9) / 1e9;
  out.h = g >= b ? theta : 360.0 - theta;
  if (out.h >= 360.0) out.h -= 360.0;
  return out;
}

inline Hsv rgb_to_hsv(const Rgb& p) { return rgb_to_hsv(p.r, p.g, p.b); }

// LBP codes for the interior of a gray image (a 1-pixel border is dropped).
// Code (x, y) belongs to source pixel (x + 1, y + 1).
struct LbpMap {
  int width = 0;
  int height = 0;
  int source_width = 0;
  int source_height = 0;
  std::vector<std::uint8_t> codes;

  std::uint8_t at(int x, int y) const { return codes[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const LbpMap&, const LbpMap&) = default;
};

// Neighbour order: top-left first, then clockwise. Bit p has weight 2^p.
inline constexpr std::array<std::pair<int, int>, 8> kLbpNeighbours = {{
    {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0},
}};
inline constexpr std::string_view kLbpOrderTag = "top-left-clockwise";

inline std::uint8_t lbp_code(const GrayImage& img, int x, int y) {
  const int center = img.at(x, y);
  unsigned code = 0;
  for (std::size_t p = 0; p < kLbpNeighbours.size(); ++p) {
    const auto [dx, dy] = kLbpNeighbours[p];
    if (img.at(x + dx, y + dy) - center >= 0) code |= 1u << p;
  }
  return static_cast<std::uint8_t>(code);
}

inline LbpMap lbp(const GrayImage& img) {
  if (img.width() < 3 || img.height() < 3) throw InvalidArgument("lbp: image smaller than 3x3");
  LbpMap m;
  m.width = img.width() - 2;
  m.height = img.height() - 2;
  m.source_width = img.width();
  m.source_height = img.height();
  m.codes.resize(static_cast<std::size_t>(m.width) * m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      m.codes[static_cast<std::size_t>(y) * m.width + x] = lbp_code(img, x + 1, y + 1);
    }
  }
  return m;
}

using LbpHistogram = std::array<double, 256>;

// Normalised histogram of codes at interior foreground pixels; all zeros
// when no interior pixel is foreground.
inline LbpHistogram lbp_histogram(const LbpMap& m, const Mask& mask) {
  if (mask.width() != m.source_width || mask.height() != m.source_height) {
    throw InvalidArgument("lbp_histogram: mask does not match the LBP source image");
  }
  LbpHistogram hist{};
  std::size_t total = 0;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!mask.at(x + 1, y + 1)) continue;
      hist[m.at(x, y)] += 1.0;
      ++total;
    }
  }
  if (total > 0) {
    for (auto& v : hist) v /= static_cast<double>(total);
  }
  return hist;
}

struct HvStats {
  double mean_h = 0.0;  // degrees
  double mean_v = 0.0;  // fraction
};

// Arithmetic means over foreground pixels. Hue is not averaged circularly:
// the hues of interest sit far from the 0/360 wrap.
inline HvStats hv_stats(const RgbImage& img, const Mask& mask) {
  if (!img.same_shape(mask)) throw InvalidArgument("hv_stats: dimension mismatch");
  double sh = 0.0;
  double sv = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (!mask.pixels()[i]) continue;
    const Hsv hsv = rgb_to_hsv(img.pixels()[i]);
    sh += hsv.h;
    sv += hsv.v;
    ++n;
  }
  if (n == 0) throw InvalidArgument("hv_stats: empty mask");
  return {sh / static_cast<double>(n), sv / static_cast<double>(n)};
}

enum class FeatureVariant { A, B };

inline std::size_t feature_dims(FeatureVariant v) { return v == FeatureVariant::A ? 258 : 2; }

inline std::string to_string(FeatureVariant v) { return v == FeatureVariant::A ? "A" : "B"; }

inline FeatureVariant parse_variant(std::string_view s) {
  if (s == "A" || s == "a") return FeatureVariant::A;
  if (s == "B" || s == "b") return FeatureVariant::B;
  throw InvalidArgument("unknown feature variant '" + std::string(s) + "'");
}

struct FeatureVector {
  FeatureVariant variant = FeatureVariant::A;
  std::vector<double> values;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline FeatureVector build_feature_vector(const RgbImage& img, const Mask& mask, FeatureVariant variant) {
  if (!img.same_shape(mask)) throw InvalidArgument("build_feature_vector: dimension mismatch");
  const HvStats hv = hv_stats(img, mask);
  FeatureVector fv;
  fv.variant = variant;
  fv.values.reserve(feature_dims(variant));
  fv.values.push_back(hv.mean_h / 360.0);
  fv.values.push_back(hv.mean_v);
  if (variant == FeatureVariant::A) {
    const auto hist = lbp_histogram(lbp(to_gray(img)), mask);
    fv.values.insert(fv.values.end(), hist.begin(), hist.end());
  }
  return fv;
}

inline nlohmann::json to_json(const FeatureVector& fv) {
  return nlohmann::json{{"variant", to_string(fv.variant)}, {"values", fv.values}};
}

inline FeatureVector feature_vector_from_json(const nlohmann::json& j) {
  FeatureVector fv;
  fv.variant = parse_variant(j.at("variant").get<std::string>());
  fv.values = j.at("values").get<std::vector<double>>();
  if (fv.values.size() != feature_dims(fv.variant)) {
    throw FormatError("feature vector length does not match its variant tag");
  }
  return fv;
}

}  // namespace gradeline
