#pragma once

// Synthetic fruit frames with exact ground truth: a crescent-shaped fruit
// whose peel colour is drawn from the class hue/value bands, optional brown
// elliptical spots, seeded pixel noise, and a plain background.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/classifiers/dataset.hpp"
#include "gradeline/detection.hpp"
#include "gradeline/error.hpp"
#include "gradeline/features.hpp"
#include "gradeline/imaging.hpp"
#include "gradeline/mask.hpp"
#include "gradeline/regions.hpp"

namespace gradeline {

// Colour in the hue/saturation/value convention of rgb_to_hsv.
inline Rgb hsv_to_rgb(double h_deg, double s, double v) {
  const double deg = std::numbers::pi / 180.0;
  h_deg = std::fmod(std::fmod(h_deg, 360.0) + 360.0, 360.0);
  // Intensity-1 triple with the requested hue and saturation.
  auto sector = [&](double h) { return 1.0 + s * std::cos(h * deg) / std::cos((60.0 - h) * deg); };
  double r, g, b;
  if (h_deg < 120.0) {
    b = 1.0 - s;
    r = sector(h_deg);
    g = 3.0 - r - b;
  } else if (h_deg < 240.0) {
    r = 1.0 - s;
    g = sector(h_deg - 120.0);
    b = 3.0 - r - g;
  } else {
    g = 1.0 - s;
    b = sector(h_deg - 240.0);
    r = 3.0 - g - b;
  }
  const double peak = std::max({r, g, b});
  const double k = peak > 0 ? v * 255.0 / peak : 0.0;
  return Rgb{clamp_u8(r * k), clamp_u8(g * k), clamp_u8(b * k)};
}

struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double ax = 1.0;  // semi-axis along the rotated x direction
  double ay = 1.0;
  double angle = 0.0;  // degrees

  bool contains(double x, double y) const {
    const double t = angle * std::numbers::pi / 180.0;
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = dx * std::cos(t) + dy * std::sin(t);
    const double w = -dx * std::sin(t) + dy * std::cos(t);
    return (u * u) / (ax * ax) + (w * w) / (ay * ay) <= 1.0;
  }
};

// Crescent = outer ellipse minus an inner ellipse pushed along the minor
// axis.
struct Crescent {
  Ellipse outer;
  Ellipse inner;

  static Crescent make(double cx, double cy, double a, double b, double angle) {
    Crescent c;
    c.outer = Ellipse{cx, cy, a, b, angle};
    const double t = angle * std::numbers::pi / 180.0;
    const double off = 0.6 * b;
    c.inner = Ellipse{cx - off * std::sin(t), cy + off * std::cos(t), a * 1.08, b * 0.8, angle};
    return c;
  }

  bool contains(double x, double y) const { return outer.contains(x, y) && !inner.contains(x, y); }
};

struct SyntheticSpec {
  Label label = Label::Ripened;
  std::optional<Subclass> subclass;
  int width = 160;
  int height = 120;
  Crescent fruit = Crescent::make(80, 60, 64, 36, 0);
  Hsv peel{55.0, 0.85, 0.85};
  Hsv spot_color{25.0, 0.65, 0.30};
  std::vector<Ellipse> spots;
  Rgb background{200, 200, 200};
  int noise_amplitude = 3;
  std::uint64_t seed = 0;
};

struct SyntheticTruth {
  Label label = Label::Ripened;
  std::optional<Subclass> subclass;
  Mask fruit;
  std::vector<BBox> spots;  // tight boxes, in spot order
};

struct SyntheticFrame {
  RgbImage image;
  SyntheticTruth truth;
};

// Peel colour bands per class. Unripened and ripened hues sit inside the
// reference bands [72, 78] and [39, 72] with margin for rounding and noise;
// over-ripened peel is brown.
struct PeelBand {
  double h_lo, h_hi, s_lo, s_hi, v_lo, v_hi;
};

inline PeelBand peel_band(Label l) {
  switch (l) {
    case Label::Unripened: return {73.5, 76.5, 0.86, 0.98, 0.30, 0.48};
    case Label::Ripened: return {44.0, 70.0, 0.72, 0.95, 0.72, 0.97};
    case Label::Overripened: return {16.0, 34.0, 0.50, 0.75, 0.36, 0.52};
  }
  return {};
}

struct GeneratorConfig {
  int width = 160;
  int height = 120;
  int noise_amplitude = 3;
  double spot_min_axis = 3.3;
  double spot_max_axis = 4.3;
  // Ripened-class spots keep a Chebyshev distance above this, so a detector
  // merging within 2 px (dilation radius 2 on both sides) sees them apart.
  int spot_separation = 5;
  int spot_margin = 2;      // spots keep this distance from the fruit edge
};

inline Mask rasterize(const Crescent& c, int width, int height) {
  Mask m(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) m.at(x, y) = c.contains(x, y) ? 1 : 0;
  }
  return m;
}

inline Mask rasterize(const Ellipse& e, int width, int height) {
  Mask m(width, height);
  const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - std::max(e.ax, e.ay) - 1)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(e.cx + std::max(e.ax, e.ay) + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - std::max(e.ax, e.ay) - 1)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(e.cy + std::max(e.ax, e.ay) + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) m.at(x, y) = e.contains(x, y) ? 1 : 0;
  }
  return m;
}

inline void validate(const SyntheticSpec& spec) {
  if (spec.width < 8 || spec.height < 8) throw InvalidArgument("synthetic spec: image too small");
  if (spec.noise_amplitude < 0) throw InvalidArgument("synthetic spec: negative noise amplitude");
  if (spec.label == Label::Unripened && !spec.spots.empty()) {
    throw InvalidArgument("synthetic spec: unripened fruit carries no spots");
  }
  if (spec.label == Label::Ripened && spec.subclass && *spec.subclass != ripeness_subclass(spec.spots.size())) {
    throw InvalidArgument("synthetic spec: ripened subclass disagrees with the spot count");
  }
  if (spec.label != Label::Ripened && spec.subclass) {
    throw InvalidArgument("synthetic spec: only ripened fruit has a subclass");
  }
}

// Draws a full spec for the class. For ripened fruit `spot_count` defaults to
// 0..5 (mid) or 6..8 (well) according to `subclass`; over-ripened fruit gets
// 8..16 overlapping blemishes.
inline SyntheticSpec sample_spec(Label label, std::optional<Subclass> subclass, std::uint64_t seed,
                                 const GeneratorConfig& cfg = {}, std::optional<int> spot_count = {}) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uint = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  SyntheticSpec s;
  s.label = label;
  s.width = cfg.width;
  s.height = cfg.height;
  s.noise_amplitude = cfg.noise_amplitude;
  s.seed = rng();

  const double a = cfg.width * uni(0.36, 0.42);
  const double b = cfg.height * uni(0.30, 0.33);
  const double cx = cfg.width * uni(0.46, 0.54);
  const double cy = cfg.height * uni(0.46, 0.54);
  const double angle = uni(-20.0, 20.0);
  s.fruit = Crescent::make(cx, cy, a, b, angle);

  const PeelBand band = peel_band(label);
  s.peel = Hsv{uni(band.h_lo, band.h_hi), uni(band.s_lo, band.s_hi), uni(band.v_lo, band.v_hi)};
  s.spot_color = Hsv{uni(20.0, 30.0), uni(0.55, 0.75), uni(0.20, 0.34)};
  const int gray = uint(180, 215);
  s.background = Rgb{static_cast<std::uint8_t>(gray + uint(-4, 4)), static_cast<std::uint8_t>(gray + uint(-4, 4)),
                     static_cast<std::uint8_t>(gray + uint(-4, 4))};

  int count = 0;
  if (label == Label::Ripened) {
    if (!subclass) subclass = uint(0, 1) ? Subclass::WellRipened : Subclass::MidRipened;
    count = spot_count ? *spot_count : (*subclass == Subclass::MidRipened ? uint(0, 5) : uint(6, 8));
    s.subclass = ripeness_subclass(static_cast<std::size_t>(count));
    if (*s.subclass != *subclass) throw InvalidArgument("synthetic spec: spot count contradicts the subclass");
  } else if (label == Label::Overripened) {
    count = spot_count ? *spot_count : uint(8, 16);
  } else if (spot_count && *spot_count != 0) {
    throw InvalidArgument("synthetic spec: unripened fruit carries no spots");
  }

  const Mask fruit = rasterize(s.fruit, s.width, s.height);
  // Spots must stay `spot_margin` pixels inside the fruit. For ripened fruit
  // they also keep `spot_separation` pixels apart so each is one defect.
  Mask inner = fruit;
  {
    Mask outside(s.width, s.height);
    for (std::size_t i = 0; i < fruit.size(); ++i) outside.pixels()[i] = fruit.pixels()[i] ? 0 : 1;
    const Mask grown = dilate(outside, cfg.spot_margin);
    for (std::size_t i = 0; i < inner.size(); ++i) inner.pixels()[i] = grown.pixels()[i] ? 0 : 1;
  }
  Mask occupied(s.width, s.height);
  const bool separate = label == Label::Ripened;
  std::vector<Point> candidates;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (inner.at(x, y)) candidates.push_back({x, y});
    }
  }
  if (count > 0 && candidates.empty()) throw InvalidArgument("synthetic spec: fruit too small for spots");
  for (int placed = 0, attempts = 0; placed < count; ++attempts) {
    if (attempts > 20000) throw InvalidArgument("synthetic spec: cannot place the requested spots");
    const Point c = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    Ellipse e{c.x + uni(-0.5, 0.5), c.y + uni(-0.5, 0.5), uni(cfg.spot_min_axis, cfg.spot_max_axis),
              uni(cfg.spot_min_axis, cfg.spot_max_axis), uni(0.0, 180.0)};
    const Mask sm = rasterize(e, s.width, s.height);
    bool ok = true;
    for (std::size_t i = 0; i < sm.size() && ok; ++i) {
      if (sm.pixels()[i] && (!inner.pixels()[i] || (separate && occupied.pixels()[i]))) ok = false;
    }
    if (!ok) continue;
    if (separate) {
      const Mask grown = dilate(sm, cfg.spot_separation);
      for (std::size_t i = 0; i < grown.size(); ++i) occupied.pixels()[i] |= grown.pixels()[i];
    }
    s.spots.push_back(e);
    ++placed;
  }
  validate(s);
  return s;
}

inline SyntheticFrame generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  SyntheticFrame f;
  f.truth.label = spec.label;
  f.truth.subclass = spec.subclass;
  f.truth.fruit = rasterize(spec.fruit, spec.width, spec.height);

  const Rgb peel = hsv_to_rgb(spec.peel.h, spec.peel.s, spec.peel.v);
  const Rgb spot = hsv_to_rgb(spec.spot_color.h, spec.spot_color.s, spec.spot_color.v);
  RgbImage img(spec.width, spec.height, spec.background);
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (f.truth.fruit.pixels()[i]) img.pixels()[i] = peel;
  }
  for (const auto& e : spec.spots) {
    const Mask sm = rasterize(e, spec.width, spec.height);
    int x0 = spec.width, y0 = spec.height, x1 = -1, y1 = -1;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        if (!sm.at(x, y) || !f.truth.fruit.at(x, y)) continue;
        img.at(x, y) = spot;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    if (x1 >= 0) f.truth.spots.push_back(BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1});
  }
  if (spec.noise_amplitude > 0) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> noise(-spec.noise_amplitude, spec.noise_amplitude);
    for (auto& p : img.pixels()) {
      p.r = static_cast<std::uint8_t>(std::clamp(p.r + noise(rng), 0, 255));
      p.g = static_cast<std::uint8_t>(std::clamp(p.g + noise(rng), 0, 255));
      p.b = static_cast<std::uint8_t>(std::clamp(p.b + noise(rng), 0, 255));
    }
  }
  f.image = std::move(img);
  return f;
}

inline nlohmann::json truth_to_json(const SyntheticTruth& t) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : t.spots) boxes.push_back(to_json(b));
  nlohmann::json j{{"label", to_string(t.label)}, {"spots", boxes}};
  j["subclass"] = t.subclass ? nlohmann::json(to_string(*t.subclass)) : nlohmann::json(nullptr);
  return j;
}

}  // namespace gradeline
