#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>

#include "gradeline/imaging.hpp"

namespace gradeline {

// Binary raster, 1 = foreground.
using Mask = Raster<std::uint8_t, MaskTag>;

inline std::size_t count_foreground(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.pixels().begin(), m.pixels().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

inline Mask full_mask(int width, int height) { return Mask(width, height, 1); }

inline double mask_iou(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw InvalidArgument("mask_iou: dimension mismatch");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool fa = a.pixels()[i] != 0;
    const bool fb = b.pixels()[i] != 0;
    inter += (fa && fb) ? 1 : 0;
    uni += (fa || fb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace gradeline
