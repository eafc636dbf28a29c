#pragma once

#include <algorithm>

#include "patchgraph/slideio/image.hpp"

namespace patchgraph::slideio {

// HSV saturation of an RGB pixel, in [0, 1].
inline double saturation(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  std::uint8_t mx = std::max({r, g, b});
  std::uint8_t mn = std::min({r, g, b});
  if (mx == 0) return 0.0;
  return static_cast<double>(mx - mn) / static_cast<double>(mx);
}

// Saturation thresholding: a pixel is tissue iff its saturation exceeds the
// threshold. Plain background (gray/white) has saturation near zero.
inline Mask segment_tissue(const Image& image, double sat_thresh = 0.06) {
  if (image.empty()) throw ValidationError("segment_tissue: empty image");
  if (!(sat_thresh >= 0.0 && sat_thresh <= 1.0)) {
    throw ValidationError("segment_tissue: saturation threshold must lie in [0, 1]");
  }
  Mask mask;
  mask.width = image.width;
  mask.height = image.height;
  mask.pixels.resize(mask.width * mask.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.pixel(x, y);
      mask.pixels[y * mask.width + x] = saturation(p[0], p[1], p[2]) > sat_thresh ? 255 : 0;
    }
  }
  return mask;
}

}  // namespace patchgraph::slideio
