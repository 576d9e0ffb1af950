#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <tuple>
#include <vector>

#include "gradeline/error.hpp"
#include "gradeline/mask.hpp"

namespace gradeline {

// Axis-aligned box: top-left corner plus extent, w and h > 0.
struct BBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  int right() const noexcept { return x + w; }   // exclusive
  int bottom() const noexcept { return y + h; }  // exclusive
  long long area() const noexcept { return static_cast<long long>(w) * h; }
  bool valid() const noexcept { return w > 0 && h > 0; }
  bool inside(int width, int height) const noexcept {
    return x >= 0 && y >= 0 && right() <= width && bottom() <= height;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Region {
  std::vector<Point> pixels;
  BBox box;
  std::size_t area() const noexcept { return pixels.size(); }
};

// 4-connected foreground regions, ordered by (top, left) of their bounding
// box. Pixels inside a region are in scan order.
inline std::vector<Region> connected_components(const Mask& m) {
  const int w = m.width();
  const int h = m.height();
  std::vector<std::int32_t> label(m.size(), -1);
  std::vector<Region> regions;
  std::vector<Point> stack;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto idx = static_cast<std::size_t>(y) * w + x;
      if (!m.pixels()[idx] || label[idx] >= 0) continue;
      const auto id = static_cast<std::int32_t>(regions.size());
      Region r;
      label[idx] = id;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Point p = stack.back();
        stack.pop_back();
        r.pixels.push_back(p);
        constexpr int dx[4] = {1, -1, 0, 0};
        constexpr int dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = p.x + dx[k];
          const int ny = p.y + dy[k];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const auto nidx = static_cast<std::size_t>(ny) * w + nx;
          if (m.pixels()[nidx] && label[nidx] < 0) {
            label[nidx] = id;
            stack.push_back({nx, ny});
          }
        }
      }
      std::sort(r.pixels.begin(), r.pixels.end(),
                [](const Point& a, const Point& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
      int x0 = w, y0 = h, x1 = -1, y1 = -1;
      for (const auto& p : r.pixels) {
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
      }
      r.box = BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
      regions.push_back(std::move(r));
    }
  }
  std::stable_sort(regions.begin(), regions.end(), [](const Region& a, const Region& b) {
    return std::tie(a.box.y, a.box.x) < std::tie(b.box.y, b.box.x);
  });
  return regions;
}

inline Mask region_mask(int width, int height, const Region& r) {
  Mask m(width, height);
  for (const auto& p : r.pixels) m.at(p.x, p.y) = 1;
  return m;
}

// Keeps the largest 4-connected foreground component; ties go to the first
// in (top, left) order.
inline Mask largest_component(const Mask& m) {
  auto regions = connected_components(m);
  Mask out(m.width(), m.height());
  if (regions.empty()) return out;
  const auto best = std::max_element(regions.begin(), regions.end(), [](const Region& a, const Region& b) {
    return a.area() < b.area();
  });
  for (const auto& p : best->pixels) out.at(p.x, p.y) = 1;
  return out;
}

// Sets background pixels that cannot reach the image border (4-connected)
// to foreground.
inline Mask fill_holes(const Mask& m) {
  const int w = m.width();
  const int h = m.height();
  Mask outside(w, h);
  std::vector<Point> stack;
  auto seed = [&](int x, int y) {
    if (!m.at(x, y) && !outside.at(x, y)) {
      outside.at(x, y) = 1;
      stack.push_back({x, y});
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!stack.empty()) {
    const Point p = stack.back();
    stack.pop_back();
    constexpr int dx[4] = {1, -1, 0, 0};
    constexpr int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = p.x + dx[k];
      const int ny = p.y + dy[k];
      if (nx >= 0 && ny >= 0 && nx < w && ny < h) seed(nx, ny);
    }
  }
  Mask out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] = outside.pixels()[i] ? 0 : 1;
  return out;
}

// Square-structuring-element dilation by `radius` pixels (Chebyshev ball).
inline Mask dilate(const Mask& m, int radius) {
  if (radius < 0) throw InvalidArgument("dilation radius must be >= 0");
  if (radius == 0) return m;
  const int w = m.width();
  const int h = m.height();
  // Separable: horizontal pass then vertical pass.
  Mask tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m.at(x, y)) continue;
      for (int nx = std::max(0, x - radius); nx <= std::min(w - 1, x + radius); ++nx) tmp.at(nx, y) = 1;
    }
  }
  Mask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!tmp.at(x, y)) continue;
      for (int ny = std::max(0, y - radius); ny <= std::min(h - 1, y + radius); ++ny) out.at(x, ny) = 1;
    }
  }
  return out;
}

}  // namespace gradeline
