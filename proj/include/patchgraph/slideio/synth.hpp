#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "patchgraph/numkit/rng.hpp"
#include "patchgraph/slideio/features.hpp"
#include "patchgraph/slideio/manifest.hpp"

namespace patchgraph::slideio {

// Synthetic stand-in for extracted slide features. Every slide gets a full
// rectangular low-magnification grid (with the aligned 2x-denser grid when a
// second magnification is requested). Features are unit-variance Gaussians;
// the class mean (class_separation on coordinate `label`) is added only inside
// one contiguous rectangle covering about a quarter of the slide, so slide
// labels are recoverable only by aggregating over patches. Each magnification
// additionally carries a small constant offset on its own coordinate
// (classes + mag index), which is class-independent.
struct SynthConfig {
  std::size_t n_patients = 30;
  std::size_t slides_per_patient = 1;
  std::size_t classes = kNumClasses;  // must be 5
  std::vector<double> mags = {5.0, 10.0};
  std::size_t dim = 16;
  std::size_t grid_extent = 4;  // low-magnification rows = cols
  double class_separation = 4.0;
  double noise_sigma = 1.0;
  double mag_shift = 0.25;
  std::uint64_t seed = 0;
};

namespace detail {

inline void validate_synth(const SynthConfig& cfg) {
  if (cfg.classes != kNumClasses) {
    throw ValidationError("synth_dataset: exactly " + std::to_string(kNumClasses) +
                          " classes are supported");
  }
  if (cfg.n_patients == 0 || cfg.slides_per_patient == 0) {
    throw ValidationError("synth_dataset: need at least one patient and one slide per patient");
  }
  if (cfg.mags.empty() || cfg.mags.size() > 2) {
    throw ValidationError("synth_dataset: magnifications must be a singleton or a doubling pair");
  }
  if (cfg.mags.size() == 2 && cfg.mags[1] != 2.0 * cfg.mags[0]) {
    throw ValidationError("synth_dataset: two magnifications must be a consecutive doubling pair");
  }
  for (double m : cfg.mags) {
    if (!(m > 0)) throw ValidationError("synth_dataset: magnifications must be positive");
  }
  if (cfg.dim < cfg.classes + cfg.mags.size()) {
    throw ValidationError("synth_dataset: dim must be at least classes + number of magnifications");
  }
  if (cfg.grid_extent == 0) throw ValidationError("synth_dataset: grid_extent must be positive");
}

}  // namespace detail

// Writes manifest.csv plus one feature file per (slide, magnification) under
// out_dir and returns the manifest path. Byte-identical for identical configs.
inline std::filesystem::path synth_dataset(const std::filesystem::path& out_dir,
                                           const SynthConfig& cfg) {
  detail::validate_synth(cfg);
  std::filesystem::create_directories(out_dir / "features");
  numkit::Rng base(cfg.seed);
  std::vector<SlideRecord> slides;

  for (std::size_t p = 0; p < cfg.n_patients; ++p) {
    int label = static_cast<int>(p % cfg.classes);  // round-robin: forced class balance
    char pid[32];
    std::snprintf(pid, sizeof pid, "P%04zu", p);
    for (std::size_t s = 0; s < cfg.slides_per_patient; ++s) {
      char sid[48];
      std::snprintf(sid, sizeof sid, "%s_S%02zu", pid, s);
      numkit::Rng rng = base.substream(std::string("slide/") + sid);

      // Signal rectangle on the low-magnification lattice, ~half extent per axis.
      std::size_t g = cfg.grid_extent;
      std::size_t rh = std::max<std::size_t>(1, g / 2);
      std::size_t rw = std::max<std::size_t>(1, g / 2);
      std::size_t top = rng.index(g - rh + 1);
      std::size_t left = rng.index(g - rw + 1);

      SlideRecord rec;
      rec.slide_id = sid;
      rec.patient_id = pid;
      rec.label = label;
      rec.native_mag = 40.0;

      for (std::size_t mi = 0; mi < cfg.mags.size(); ++mi) {
        std::size_t scale = mi == 0 ? 1 : 2;  // the high-mag grid is 2x denser
        std::size_t rows = g * scale, cols = g * scale;
        FeatureSet fs;
        fs.magnification = cfg.mags[mi];
        fs.dim = cfg.dim;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            bool in_region = (r / scale) >= top && (r / scale) < top + rh && (c / scale) >= left &&
                             (c / scale) < left + rw;
            std::vector<double> v(cfg.dim);
            for (std::size_t j = 0; j < cfg.dim; ++j) v[j] = cfg.noise_sigma * rng.normal();
            if (in_region) v[static_cast<std::size_t>(label)] += cfg.class_separation;
            v[cfg.classes + mi] += cfg.mag_shift;
            fs.rows.emplace(GridKey{r, c}, std::move(v));
          }
        }
        std::string mag_str = csvio::format_double(cfg.mags[mi]);
        std::filesystem::path rel = std::filesystem::path("features") / (rec.slide_id + "_" + mag_str + "x.csv");
        write_features(out_dir / rel, fs);
        rec.feature_paths[cfg.mags[mi]] = rel;  // stored relative in the manifest
      }
      slides.push_back(std::move(rec));
    }
  }
  std::filesystem::path manifest_path = out_dir / "manifest.csv";
  write_manifest(manifest_path, slides);
  return manifest_path;
}

}  // namespace patchgraph::slideio
