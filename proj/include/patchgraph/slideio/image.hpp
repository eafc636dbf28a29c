#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "patchgraph/errors.hpp"

namespace patchgraph::slideio {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  bool empty() const { return width == 0 || height == 0; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return rgb.data() + 3 * (y * width + x);
  }
  std::uint8_t* pixel(std::size_t x, std::size_t y) { return rgb.data() + 3 * (y * width + x); }
};

// Binary tissue mask: 255 = tissue, 0 = background.
struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  bool empty() const { return width == 0 || height == 0; }
  bool tissue(std::size_t x, std::size_t y) const { return pixels[y * width + x] != 0; }
};

namespace detail {

// Reads one whitespace-delimited token from a PNM header, skipping # comments.
inline std::string pnm_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError("truncated PNM header in " + path.string());
  return tok;
}

inline std::size_t pnm_dim(std::istream& in, const std::filesystem::path& path) {
  std::string tok = pnm_token(in, path);
  try {
    long long v = std::stoll(tok);
    if (v <= 0) throw std::invalid_argument("nonpositive");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw IoError("bad dimension '" + tok + "' in " + path.string());
  }
}

}  // namespace detail

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (detail::pnm_token(in, path) != "P6") throw IoError(path.string() + " is not a binary PPM (P6)");
  Image img;
  img.width = detail::pnm_dim(in, path);
  img.height = detail::pnm_dim(in, path);
  if (detail::pnm_token(in, path) != "255") throw IoError(path.string() + ": only maxval 255 is supported");
  img.rgb.resize(3 * img.width * img.height);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    throw IoError("truncated pixel data in " + path.string());
  }
  return img;
}

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Mask read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (detail::pnm_token(in, path) != "P5") throw IoError(path.string() + " is not a binary PGM (P5)");
  Mask mask;
  mask.width = detail::pnm_dim(in, path);
  mask.height = detail::pnm_dim(in, path);
  if (detail::pnm_token(in, path) != "255") throw IoError(path.string() + ": only maxval 255 is supported");
  mask.pixels.resize(mask.width * mask.height);
  in.read(reinterpret_cast<char*>(mask.pixels.data()), static_cast<std::streamsize>(mask.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(mask.pixels.size())) {
    throw IoError("truncated pixel data in " + path.string());
  }
  return mask;
}

inline void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(mask.pixels.data()),
            static_cast<std::streamsize>(mask.pixels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace patchgraph::slideio
