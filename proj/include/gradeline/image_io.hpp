#pragma once

// PNG and binary PPM (P6) codecs. PNG goes through libpng's simplified API;
// PPM is parsed here.

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "gradeline/error.hpp"
#include "gradeline/imaging.hpp"
#include "gradeline/mask.hpp"

namespace gradeline {

using Bytes = std::vector<std::uint8_t>;

// Images larger than this many pixels are rejected as a dimension overflow.
inline constexpr std::uint64_t kMaxPixels = std::uint64_t{1} << 26;

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const Bytes& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

namespace detail {

inline void check_dimensions(std::uint64_t w, std::uint64_t h) {
  if (w == 0 || h == 0) throw FormatError("unsupported/corrupt image: zero dimension");
  if (w > static_cast<std::uint64_t>(std::numeric_limits<int>::max()) ||
      h > static_cast<std::uint64_t>(std::numeric_limits<int>::max()) || w * h > kMaxPixels) {
    throw FormatError("unsupported/corrupt image: dimension overflow");
  }
}

inline bool is_png(const Bytes& data) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return data.size() >= 8 && std::memcmp(data.data(), sig, 8) == 0;
}

inline bool is_ppm(const Bytes& data) {
  return data.size() >= 2 && data[0] == 'P' && data[1] == '6';
}

// Reads one unsigned decimal header token, skipping whitespace and comments.
inline std::uint64_t read_ppm_token(const Bytes& data, std::size_t& pos) {
  for (;;) {
    if (pos >= data.size()) throw FormatError("unsupported/corrupt PPM: truncated header");
    const auto c = data[pos];
    if (c == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (std::isspace(c)) {
      ++pos;
    } else {
      break;
    }
  }
  if (!std::isdigit(data[pos])) throw FormatError("unsupported/corrupt PPM: bad header token");
  std::uint64_t v = 0;
  while (pos < data.size() && std::isdigit(data[pos])) {
    v = v * 10 + static_cast<std::uint64_t>(data[pos] - '0');
    if (v > (std::uint64_t{1} << 40)) throw FormatError("unsupported/corrupt PPM: dimension overflow");
    ++pos;
  }
  return v;
}

template <class Pixel, class Tag>
Bytes encode_png_raw(const Raster<Pixel, Tag>& img, std::uint32_t format, const void* buffer) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buffer, 0, nullptr)) {
    throw FormatError(std::string("png encode failed: ") + image.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, buffer, 0, nullptr)) {
    throw FormatError(std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

// Decodes any PNG into the requested libpng pixel format.
inline std::vector<std::uint8_t> decode_png_raw(const Bytes& data, std::uint32_t format, int& w, int& h) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
    throw FormatError(std::string("unsupported/corrupt PNG: ") + image.message);
  }
  try {
    check_dimensions(image.width, image.height);
  } catch (...) {
    png_image_free(&image);
    throw;
  }
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("unsupported/corrupt PNG: " + msg);
  }
  w = static_cast<int>(image.width);
  h = static_cast<int>(image.height);
  return buf;
}

}  // namespace detail

inline Bytes encode_png(const RgbImage& img) {
  static_assert(sizeof(Rgb) == 3);
  return detail::encode_png_raw(img, PNG_FORMAT_RGB, img.pixels().data());
}

inline Bytes encode_png(const GrayImage& img) {
  return detail::encode_png_raw(img, PNG_FORMAT_GRAY, img.pixels().data());
}

// Masks are written as 0/255 grayscale.
inline Bytes encode_png(const Mask& m) {
  GrayImage g(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) g.pixels()[i] = m.pixels()[i] ? 255 : 0;
  return encode_png(g);
}

inline RgbImage decode_png(const Bytes& data) {
  int w = 0;
  int h = 0;
  auto buf = detail::decode_png_raw(data, PNG_FORMAT_RGB, w, h);
  std::vector<Rgb> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  std::memcpy(px.data(), buf.data(), buf.size());
  return RgbImage(w, h, std::move(px));
}

// Any PNG; a pixel is foreground when its gray level is >= 128.
inline Mask decode_mask_png(const Bytes& data) {
  int w = 0;
  int h = 0;
  auto buf = detail::decode_png_raw(data, PNG_FORMAT_GRAY, w, h);
  Mask m(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i) m.pixels()[i] = buf[i] >= 128 ? 1 : 0;
  return m;
}

inline Bytes encode_ppm(const RgbImage& img) {
  std::string header = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + img.size() * 3);
  for (const auto& p : img.pixels()) {
    out.push_back(p.r);
    out.push_back(p.g);
    out.push_back(p.b);
  }
  return out;
}

inline RgbImage decode_ppm(const Bytes& data) {
  if (!detail::is_ppm(data)) throw FormatError("unsupported/corrupt PPM: missing P6 magic");
  std::size_t pos = 2;
  const auto w = detail::read_ppm_token(data, pos);
  const auto h = detail::read_ppm_token(data, pos);
  const auto maxval = detail::read_ppm_token(data, pos);
  if (maxval != 255) throw FormatError("unsupported/corrupt PPM: only maxval 255 is supported");
  detail::check_dimensions(w, h);
  if (pos >= data.size() || !std::isspace(data[pos])) {
    throw FormatError("unsupported/corrupt PPM: truncated header");
  }
  ++pos;  // single whitespace byte before the raster
  const std::uint64_t need = w * h * 3;
  if (data.size() - pos < need) throw FormatError("unsupported/corrupt PPM: truncated raster");
  std::vector<Rgb> px(static_cast<std::size_t>(w * h));
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = Rgb{data[pos + 3 * i], data[pos + 3 * i + 1], data[pos + 3 * i + 2]};
  }
  return RgbImage(static_cast<int>(w), static_cast<int>(h), std::move(px));
}

// Detects the codec from the magic bytes.
inline RgbImage decode_image(const Bytes& data) {
  if (detail::is_png(data)) return decode_png(data);
  if (detail::is_ppm(data)) return decode_ppm(data);
  throw FormatError("unsupported/corrupt image: unknown format");
}

inline RgbImage load_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

// Codec chosen by extension: .ppm writes P6, anything else PNG.
inline void save_image(const std::filesystem::path& path, const RgbImage& img) {
  const bool ppm = path.extension() == ".ppm" || path.extension() == ".PPM";
  write_file(path, ppm ? encode_ppm(img) : encode_png(img));
}

inline void save_mask(const std::filesystem::path& path, const Mask& m) { write_file(path, encode_png(m)); }

inline Mask load_mask(const std::filesystem::path& path) { return decode_mask_png(read_file(path)); }

}  // namespace gradeline
