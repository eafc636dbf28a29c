#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "patchgraph/csvio.hpp"
#include "patchgraph/errors.hpp"

namespace patchgraph::slideio {

using GridKey = std::pair<std::size_t, std::size_t>;  // (row, col)

// Patch feature vectors for one slide at one magnification.
struct FeatureSet {
  double magnification = 0.0;
  std::size_t dim = 0;
  std::map<GridKey, std::vector<double>> rows;

  std::size_t count() const { return rows.size(); }
};

inline bool operator==(const FeatureSet& a, const FeatureSet& b) {
  return a.magnification == b.magnification && a.dim == b.dim && a.rows == b.rows;
}

// CSV with header mag,row,col,f0,...,f{D-1}; rows ascending by (row, col);
// floats as shortest round-trip decimals, so read(write(fs)) is bit-exact.
inline void write_features(const std::filesystem::path& path, const FeatureSet& fs) {
  std::ostringstream out;
  out << "mag,row,col";
  for (std::size_t j = 0; j < fs.dim; ++j) out << ",f" << j;
  out << '\n';
  std::string mag = csvio::format_double(fs.magnification);
  for (const auto& [key, vec] : fs.rows) {
    if (vec.size() != fs.dim) {
      throw ValidationError("write_features: row (" + std::to_string(key.first) + "," +
                            std::to_string(key.second) + ") has dimension " +
                            std::to_string(vec.size()) + ", expected " + std::to_string(fs.dim));
    }
    out << mag << ',' << key.first << ',' << key.second;
    for (double v : vec) out << ',' << csvio::format_double(v);
    out << '\n';
  }
  csvio::write_text(path, out.str());
}

inline FeatureSet read_features(const std::filesystem::path& path) {
  std::vector<std::string> lines = csvio::read_lines(path);
  if (lines.empty()) throw IoError("feature file " + path.string() + " is empty (missing header)");
  std::vector<std::string> header = csvio::split(lines[0]);
  if (header.size() < 4 || header[0] != "mag" || header[1] != "row" || header[2] != "col") {
    throw IoError("feature file " + path.string() + " has a malformed header");
  }
  FeatureSet fs;
  fs.dim = header.size() - 3;
  for (std::size_t j = 0; j < fs.dim; ++j) {
    if (header[3 + j] != "f" + std::to_string(j)) {
      throw IoError("feature file " + path.string() + " has a malformed header column '" +
                    header[3 + j] + "'");
    }
  }
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    std::vector<std::string> f = csvio::split(lines[ln]);
    std::string where = path.string() + ":" + std::to_string(ln + 1);
    if (f.size() != 3 + fs.dim) {
      throw IoError("feature row at " + where + " has " + std::to_string(f.size() - 3) +
                    " values, expected " + std::to_string(fs.dim));
    }
    double mag = csvio::parse_double(f[0], where);
    std::size_t row = static_cast<std::size_t>(csvio::parse_int(f[1], where));
    std::size_t col = static_cast<std::size_t>(csvio::parse_int(f[2], where));
    if (fs.rows.empty()) {
      fs.magnification = mag;
    } else if (mag != fs.magnification) {
      throw IoError("mixed magnifications in " + path.string());
    }
    std::vector<double> vec(fs.dim);
    for (std::size_t j = 0; j < fs.dim; ++j) vec[j] = csvio::parse_double(f[3 + j], where);
    if (!fs.rows.emplace(GridKey{row, col}, std::move(vec)).second) {
      throw IoError("duplicate (mag,row,col) key at " + where);
    }
  }
  return fs;
}

}  // namespace patchgraph::slideio
