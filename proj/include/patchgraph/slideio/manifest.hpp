#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "patchgraph/csvio.hpp"
#include "patchgraph/errors.hpp"

namespace patchgraph::slideio {

// Class order fixed across the whole project: label index 0..4.
inline constexpr std::array<std::string_view, 5> kClassNames = {"HGSC", "EC", "CCC", "LGSC", "MC"};
inline constexpr std::size_t kNumClasses = 5;

struct SlideRecord {
  std::string slide_id;
  std::string patient_id;
  int label = 0;  // 0..4
  double native_mag = 40.0;
  std::map<double, std::filesystem::path> feature_paths;  // magnification -> file
};

struct Manifest {
  std::filesystem::path dir;  // directory the manifest was read from
  std::vector<SlideRecord> slides;
};

inline constexpr std::array<double, 3> kManifestMags = {5.0, 10.0, 20.0};

inline int parse_label(const std::string& s, const std::string& where) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (s == kClassNames[i]) return static_cast<int>(i);
  }
  long long v = csvio::parse_int(s, where);
  if (v < 0 || v >= static_cast<long long>(kNumClasses)) {
    throw IoError("label out of range at " + where + ": '" + s + "'");
  }
  return static_cast<int>(v);
}

// CSV header (exact): slide_id,patient_id,label,native_mag,feature_path_5x,
// feature_path_10x,feature_path_20x. Paths are stored relative to the
// manifest's directory; unused magnification columns are left empty.
inline void write_manifest(const std::filesystem::path& path, const std::vector<SlideRecord>& slides) {
  std::ostringstream out;
  out << "slide_id,patient_id,label,native_mag,feature_path_5x,feature_path_10x,feature_path_20x\n";
  for (const SlideRecord& s : slides) {
    out << s.slide_id << ',' << s.patient_id << ',' << s.label << ','
        << csvio::format_double(s.native_mag);
    for (double mag : kManifestMags) {
      out << ',';
      auto it = s.feature_paths.find(mag);
      if (it != s.feature_paths.end()) out << it->second.generic_string();
    }
    out << '\n';
  }
  csvio::write_text(path, out.str());
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::vector<std::string> lines = csvio::read_lines(path);
  if (lines.empty()) throw IoError("manifest " + path.string() + " is empty");
  static constexpr std::string_view kHeader =
      "slide_id,patient_id,label,native_mag,feature_path_5x,feature_path_10x,feature_path_20x";
  if (lines[0] != kHeader) {
    throw IoError("manifest " + path.string() + " has a malformed header");
  }
  Manifest manifest;
  manifest.dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    std::vector<std::string> f = csvio::split(lines[ln]);
    std::string where = path.string() + ":" + std::to_string(ln + 1);
    if (f.size() != 7) throw IoError("manifest row at " + where + " has " + std::to_string(f.size()) + " fields, expected 7");
    SlideRecord rec;
    rec.slide_id = f[0];
    rec.patient_id = f[1];
    rec.label = parse_label(f[2], where);
    rec.native_mag = csvio::parse_double(f[3], where);
    if (!(rec.native_mag > 0)) throw IoError("native_mag must be positive at " + where);
    for (std::size_t m = 0; m < kManifestMags.size(); ++m) {
      if (f[4 + m].empty()) continue;
      std::filesystem::path p(f[4 + m]);
      rec.feature_paths[kManifestMags[m]] = p.is_absolute() ? p : manifest.dir / p;
    }
    manifest.slides.push_back(std::move(rec));
  }
  return manifest;
}

}  // namespace patchgraph::slideio
