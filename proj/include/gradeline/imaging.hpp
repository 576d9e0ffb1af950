#pragma once

// Raster types and the pre-processing operators applied ahead of
// segmentation: grayscale conversion, rank filtering and log transform.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gradeline/error.hpp"

namespace gradeline {

// Round-half-up, the single quantization rule used across the library.
inline double round_half_up(double x) { return std::floor(x + 0.5); }

inline std::uint8_t clamp_u8(double x) {
  return static_cast<std::uint8_t>(std::clamp(round_half_up(x), 0.0, 255.0));
}

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Row-major raster. The tag keeps GrayImage and Mask distinct types even
// though both store one byte per pixel.
template <class Pixel, class Tag>
class Raster {
 public:
  using pixel_type = Pixel;

  Raster() = default;

  Raster(int width, int height, Pixel fill = Pixel{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw InvalidArgument("raster dimensions must be non-negative");
    }
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  Raster(int width, int height, std::vector<Pixel> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 0 || height < 0 ||
        pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw InvalidArgument("pixel count does not match width x height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  const Pixel& at(int x, int y) const { return pixels_[index(x, y)]; }
  Pixel& at(int x, int y) { return pixels_[index(x, y)]; }

  // Edge-replicated access for windowed operators.
  const Pixel& clamped(int x, int y) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<const Pixel> pixels() const noexcept { return pixels_; }
  std::span<Pixel> pixels() noexcept { return pixels_; }

  template <class OtherPixel, class OtherTag>
  bool same_shape(const Raster<OtherPixel, OtherTag>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Pixel> pixels_;
};

struct RgbTag {};
struct GrayTag {};
struct MaskTag {};

using RgbImage = Raster<Rgb, RgbTag>;
using GrayImage = Raster<std::uint8_t, GrayTag>;

// Per-pixel luma, 0.299 R + 0.587 G + 0.114 B.
inline std::uint8_t luma(const Rgb& p) {
  return clamp_u8(0.299 * p.r + 0.587 * p.g + 0.114 * p.b);
}

inline GrayImage to_gray(const RgbImage& img) {
  GrayImage out(img.width(), img.height());
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = luma(src[i]);
  return out;
}

inline GrayImage extract_channel(const RgbImage& img, int channel) {
  if (channel < 0 || channel > 2) throw InvalidArgument("channel index must be 0, 1 or 2");
  GrayImage out(img.width(), img.height());
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = channel == 0 ? src[i].r : channel == 1 ? src[i].g : src[i].b;
  }
  return out;
}

inline RgbImage merge_channels(const GrayImage& r, const GrayImage& g, const GrayImage& b) {
  if (!r.same_shape(g) || !r.same_shape(b)) throw InvalidArgument("channel shapes differ");
  RgbImage out(r.width(), r.height());
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = Rgb{r.pixels()[i], g.pixels()[i], b.pixels()[i]};
  }
  return out;
}

// Order-statistic filter: each output pixel is the rank-th smallest value of
// the window centred on it (rank window*window/2 is the median). Borders are
// edge-replicated so the output keeps the input size.
inline GrayImage rank_filter(const GrayImage& img, int window, int rank) {
  if (window < 3 || window % 2 == 0) {
    throw InvalidArgument("rank_filter window must be odd and >= 3");
  }
  if (rank < 0 || rank >= window * window) {
    throw InvalidArgument("rank_filter rank out of range");
  }
  GrayImage out(img.width(), img.height());
  if (img.empty()) return out;

  const int half = window / 2;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(window * window));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      std::size_t k = 0;
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) buf[k++] = img.clamped(x + dx, y + dy);
      }
      std::nth_element(buf.begin(), buf.begin() + rank, buf.end());
      out.at(x, y) = buf[static_cast<std::size_t>(rank)];
    }
  }
  return out;
}

inline GrayImage median_filter(const GrayImage& img, int window = 3) {
  return rank_filter(img, window, window * window / 2);
}

// out = c * ln(1 + in), c = 255 / ln(256), so 0 -> 0 and 255 -> 255.
inline const std::array<std::uint8_t, 256>& log_table() {
  static const std::array<std::uint8_t, 256> table = [] {
    std::array<std::uint8_t, 256> t{};
    const double c = 255.0 / std::log(256.0);
    for (int v = 0; v < 256; ++v) t[static_cast<std::size_t>(v)] = clamp_u8(c * std::log1p(v));
    return t;
  }();
  return table;
}

inline GrayImage log_transform(const GrayImage& img) {
  GrayImage out(img.width(), img.height());
  const auto& table = log_table();
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = table[src[i]];
  return out;
}

// Rank filter followed by log transform on each of R, G, B independently.
inline RgbImage preprocess_rgb(const RgbImage& img, int window, int rank) {
  std::array<GrayImage, 3> ch;
  for (int c = 0; c < 3; ++c) {
    ch[static_cast<std::size_t>(c)] = log_transform(rank_filter(extract_channel(img, c), window, rank));
  }
  return merge_channels(ch[0], ch[1], ch[2]);
}

}  // namespace gradeline
