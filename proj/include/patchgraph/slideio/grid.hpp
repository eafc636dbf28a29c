#pragma once

#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "patchgraph/csvio.hpp"
#include "patchgraph/errors.hpp"
#include "patchgraph/slideio/image.hpp"

namespace patchgraph::slideio {

struct PatchEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t x_px = 0;  // col * patch side in native pixels
  std::size_t y_px = 0;
  double tissue_fraction = 0.0;
};

// Lattice of non-overlapping tissue patches at one apparent magnification.
struct PatchGrid {
  double magnification = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<PatchEntry> entries;  // sorted by (row, col)
};

// Native-pixel side of a patch that downsamples to out_px at the target
// magnification: out_px * native_mag / target_mag.
inline std::size_t native_patch_size(double native_mag, double target_mag, std::size_t out_px = 256) {
  if (!(native_mag > 0.0 && target_mag > 0.0)) {
    throw ValidationError("native_patch_size: magnifications must be positive");
  }
  if (target_mag > native_mag) {
    throw ValidationError("native_patch_size: upsampling from " + csvio::format_double(native_mag) +
                          "x to " + csvio::format_double(target_mag) + "x is unsupported");
  }
  double exact = static_cast<double>(out_px) * native_mag / target_mag;
  double rounded = std::round(exact);
  if (std::abs(exact - rounded) > 1e-9 * exact) {
    throw ValidationError("native_patch_size: " + csvio::format_double(native_mag) + "x to " +
                          csvio::format_double(target_mag) + "x gives a non-integer patch size");
  }
  return static_cast<std::size_t>(rounded);
}

// Tiles the mask with non-overlapping squares and keeps tiles whose tissue
// fraction reaches min_tissue. Partial tiles at the image edges are dropped.
inline PatchGrid build_patch_grid(const Mask& mask, double native_mag, double target_mag,
                                  double min_tissue = 0.5) {
  if (mask.empty()) throw ValidationError("build_patch_grid: empty mask");
  if (!(min_tissue >= 0.0 && min_tissue <= 1.0)) {
    throw ValidationError("build_patch_grid: min_tissue must lie in [0, 1]");
  }
  std::size_t tile = native_patch_size(native_mag, target_mag);
  PatchGrid grid;
  grid.magnification = target_mag;
  grid.rows = mask.height / tile;
  grid.cols = mask.width / tile;
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      std::size_t tissue = 0;
      for (std::size_t dy = 0; dy < tile; ++dy) {
        const std::uint8_t* rowp = mask.pixels.data() + (r * tile + dy) * mask.width + c * tile;
        for (std::size_t dx = 0; dx < tile; ++dx) tissue += rowp[dx] != 0;
      }
      double fraction = static_cast<double>(tissue) / (static_cast<double>(tile) * tile);
      if (fraction >= min_tissue) {
        grid.entries.push_back({r, c, c * tile, r * tile, fraction});
      }
    }
  }
  if (grid.entries.empty()) {
    throw EmptySlideError("build_patch_grid: no tile reaches tissue fraction " +
                          csvio::format_double(min_tissue));
  }
  return grid;
}

inline void write_grid_csv(const std::filesystem::path& path, const PatchGrid& grid) {
  std::ostringstream out;
  out << "mag,row,col,x,y,tissue_fraction\n";
  for (const PatchEntry& e : grid.entries) {
    out << csvio::format_double(grid.magnification) << ',' << e.row << ',' << e.col << ',' << e.x_px
        << ',' << e.y_px << ',' << csvio::format_double(e.tissue_fraction) << '\n';
  }
  csvio::write_text(path, out.str());
}

}  // namespace patchgraph::slideio
