#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "patchgraph/slideio/features.hpp"
#include "patchgraph/slideio/grid.hpp"
#include "patchgraph/slideio/image.hpp"
#include "patchgraph/slideio/manifest.hpp"
#include "patchgraph/slideio/segment.hpp"
#include "patchgraph/slideio/synth.hpp"

namespace fs = std::filesystem;
namespace sio = patchgraph::slideio;
using patchgraph::EmptySlideError;
using patchgraph::IoError;
using patchgraph::ValidationError;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("patchgraph_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

sio::Image solid_image(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  sio::Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(3 * w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    img.rgb[3 * i] = r;
    img.rgb[3 * i + 1] = g;
    img.rgb[3 * i + 2] = b;
  }
  return img;
}

sio::Mask solid_mask(std::size_t w, std::size_t h, std::uint8_t v) {
  sio::Mask m;
  m.width = w;
  m.height = h;
  m.pixels.assign(w * h, v);
  return m;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    out[fs::relative(entry.path(), root).generic_string()] = std::move(bytes);
  }
  return out;
}

}  // namespace

TEST(Segment, GrayscaleIsAllBackground) {
  sio::Mask m = sio::segment_tissue(solid_image(8, 6, 120, 120, 120), 0.06);
  for (std::uint8_t p : m.pixels) EXPECT_EQ(p, 0);
}

TEST(Segment, SaturatedRedIsAllTissue) {
  sio::Mask m = sio::segment_tissue(solid_image(8, 6, 255, 0, 0), 0.06);
  for (std::uint8_t p : m.pixels) EXPECT_EQ(p, 255);
}

TEST(Segment, HalfSaturatedMatchesPerPixelOracle) {
  sio::Image img = solid_image(10, 4, 128, 128, 128);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 5; x < img.width; ++x) {
      std::uint8_t* p = img.pixel(x, y);
      p[0] = 200; p[1] = 40; p[2] = 60;
    }
  }
  sio::Mask m = sio::segment_tissue(img, 0.06);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.pixel(x, y);
      bool oracle = sio::saturation(p[0], p[1], p[2]) > 0.06;
      EXPECT_EQ(m.tissue(x, y), oracle) << "pixel " << x << "," << y;
      EXPECT_EQ(m.tissue(x, y), x >= 5);
    }
  }
}

TEST(Segment, EmptyImageRejected) {
  EXPECT_THROW(sio::segment_tissue(sio::Image{}, 0.06), ValidationError);
}

TEST(PatchSize, MagnificationArithmetic) {
  EXPECT_EQ(sio::native_patch_size(40, 5), 2048u);
  EXPECT_EQ(sio::native_patch_size(40, 10), 1024u);
  EXPECT_EQ(sio::native_patch_size(40, 20), 512u);
  EXPECT_EQ(sio::native_patch_size(20, 20), 256u);
  EXPECT_EQ(sio::native_patch_size(20, 5), 1024u);
}

TEST(PatchSize, HalvesWhenTargetDoubles) {
  for (double native : {20.0, 40.0}) {
    for (double target : {5.0, 10.0}) {
      if (2 * target > native) continue;
      EXPECT_EQ(sio::native_patch_size(native, target), 2 * sio::native_patch_size(native, 2 * target));
    }
  }
}

TEST(PatchSize, UpsamplingAndNonIntegerRejected) {
  EXPECT_THROW(sio::native_patch_size(20, 40), ValidationError);
  EXPECT_THROW(sio::native_patch_size(40, 15), ValidationError);
}

TEST(Grid, FullTilingCoversMask) {
  sio::PatchGrid g = sio::build_patch_grid(solid_mask(4096, 4096, 255), 40, 5, 0.5);
  EXPECT_EQ(g.rows, 2u);
  EXPECT_EQ(g.cols, 2u);
  ASSERT_EQ(g.entries.size(), 4u);
  for (const auto& e : g.entries) {
    EXPECT_DOUBLE_EQ(e.tissue_fraction, 1.0);
    EXPECT_EQ(e.x_px, e.col * 2048);
    EXPECT_EQ(e.y_px, e.row * 2048);
  }
}

TEST(Grid, AllBackgroundIsEmptySlide) {
  EXPECT_THROW(sio::build_patch_grid(solid_mask(4096, 4096, 0), 40, 5, 0.5), EmptySlideError);
}

TEST(Grid, TissueOnlyInTopLeftTile) {
  sio::Mask m = solid_mask(4096, 4096, 0);
  for (std::size_t y = 0; y < 2048; ++y)
    for (std::size_t x = 0; x < 2048; ++x) m.pixels[y * m.width + x] = 255;
  sio::PatchGrid g = sio::build_patch_grid(m, 40, 5, 0.5);
  ASSERT_EQ(g.entries.size(), 1u);
  EXPECT_EQ(g.entries[0].row, 0u);
  EXPECT_EQ(g.entries[0].col, 0u);
  EXPECT_DOUBLE_EQ(g.entries[0].tissue_fraction, 1.0);
}

TEST(Grid, PartialEdgeTilesAreDropped) {
  sio::PatchGrid g = sio::build_patch_grid(solid_mask(1100, 1500, 255), 40, 40, 0.5);
  // 256-pixel tiles: 4 columns, 5 rows; the 76/220 pixel remainders are dropped
  EXPECT_EQ(g.cols, 4u);
  EXPECT_EQ(g.rows, 5u);
  EXPECT_EQ(g.entries.size(), 20u);
}

TEST(Grid, MinTissueBoundary) {
  sio::Mask m = solid_mask(512, 256, 0);
  for (std::size_t y = 0; y < 256; ++y)
    for (std::size_t x = 0; x < 128; ++x) m.pixels[y * m.width + x] = 255;  // left tile half tissue
  sio::PatchGrid g = sio::build_patch_grid(m, 40, 40, 0.5);
  ASSERT_EQ(g.entries.size(), 1u);  // fraction 0.5 >= 0.5 retained; right tile 0.0 dropped
  EXPECT_DOUBLE_EQ(g.entries[0].tissue_fraction, 0.5);
}

TEST(Grid, CsvUsesNativePixelStep) {
  fs::path dir = temp_dir("gridcsv");
  sio::PatchGrid g = sio::build_patch_grid(solid_mask(4096, 4096, 255), 40, 5, 0.5);
  sio::write_grid_csv(dir / "grid.csv", g);
  auto lines = patchgraph::csvio::read_lines(dir / "grid.csv");
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "mag,row,col,x,y,tissue_fraction");
  EXPECT_EQ(lines[2], "5,0,1,2048,0,1");  // x step is the 2048-pixel native patch
}

TEST(Ppm, RoundTrip) {
  fs::path dir = temp_dir("ppm");
  sio::Image img = solid_image(3, 2, 10, 200, 30);
  img.pixel(1, 1)[0] = 99;
  sio::write_ppm(dir / "img.ppm", img);
  sio::Image back = sio::read_ppm(dir / "img.ppm");
  EXPECT_EQ(back.width, img.width);
  EXPECT_EQ(back.height, img.height);
  EXPECT_EQ(back.rgb, img.rgb);
  sio::Mask m = solid_mask(4, 4, 255);
  sio::write_pgm(dir / "m.pgm", m);
  EXPECT_EQ(sio::read_pgm(dir / "m.pgm").pixels, m.pixels);
}

TEST(Ppm, MalformedRasterRejected) {
  fs::path dir = temp_dir("ppmbad");
  std::ofstream(dir / "bad.ppm") << "P6\n3 2\n255\nxx";  // truncated pixels
  EXPECT_THROW(sio::read_ppm(dir / "bad.ppm"), IoError);
  std::ofstream(dir / "worse.ppm") << "NOTPPM";
  EXPECT_THROW(sio::read_ppm(dir / "worse.ppm"), IoError);
}

TEST(Features, EmptySetRoundTripsHeaderOnly) {
  fs::path dir = temp_dir("feat_empty");
  sio::FeatureSet fsraw;
  fsraw.magnification = 10;
  fsraw.dim = 8;
  sio::write_features(dir / "f.csv", fsraw);
  auto lines = patchgraph::csvio::read_lines(dir / "f.csv");
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0], "mag,row,col,f0,f1,f2,f3,f4,f5,f6,f7");
  sio::FeatureSet back = sio::read_features(dir / "f.csv");
  EXPECT_EQ(back.dim, 8u);
  EXPECT_TRUE(back.rows.empty());
}

TEST(Features, RoundTripIsBitExact) {
  fs::path dir = temp_dir("feat_rt");
  sio::FeatureSet fsraw;
  fsraw.magnification = 5;
  fsraw.dim = 4;
  fsraw.rows[{0, 0}] = {0.1, -2.5e-17, 3.0, 1.0 / 3.0};
  fsraw.rows[{0, 3}] = {1e300, -0.0, 5e-324, 2.0};
  fsraw.rows[{7, 1}] = {-1.5, 0.0, 123456.789, -9.875};
  sio::write_features(dir / "f.csv", fsraw);
  sio::FeatureSet back = sio::read_features(dir / "f.csv");
  EXPECT_TRUE(back == fsraw);
}

TEST(Features, DuplicateKeyRejected) {
  fs::path dir = temp_dir("feat_dup");
  std::ofstream(dir / "f.csv") << "mag,row,col,f0\n10,1,2,0.5\n10,1,2,0.7\n";
  EXPECT_THROW(sio::read_features(dir / "f.csv"), IoError);
}

TEST(Features, MalformedHeaderRejected) {
  fs::path dir = temp_dir("feat_hdr");
  std::ofstream(dir / "f.csv") << "row,col,f0\n";
  EXPECT_THROW(sio::read_features(dir / "f.csv"), IoError);
  std::ofstream(dir / "g.csv") << "mag,row,col,f0,fX\n";
  EXPECT_THROW(sio::read_features(dir / "g.csv"), IoError);
}

TEST(Features, DimensionMismatchRejected) {
  fs::path dir = temp_dir("feat_dim");
  std::ofstream(dir / "f.csv") << "mag,row,col,f0,f1\n10,0,0,0.5\n";
  EXPECT_THROW(sio::read_features(dir / "f.csv"), IoError);
  sio::FeatureSet bad;
  bad.magnification = 10;
  bad.dim = 2;
  bad.rows[{0, 0}] = {1.0};
  EXPECT_THROW(sio::write_features(dir / "g.csv", bad), ValidationError);
}

TEST(Manifest, RoundTripAndLabelNames) {
  fs::path dir = temp_dir("manifest");
  std::vector<sio::SlideRecord> slides(2);
  slides[0].slide_id = "s1";
  slides[0].patient_id = "p1";
  slides[0].label = 3;
  slides[0].native_mag = 40;
  slides[0].feature_paths[5.0] = "features/s1_5x.csv";
  slides[0].feature_paths[10.0] = "features/s1_10x.csv";
  slides[1].slide_id = "s2";
  slides[1].patient_id = "p2";
  slides[1].label = 0;
  slides[1].native_mag = 20;
  slides[1].feature_paths[20.0] = "features/s2_20x.csv";
  sio::write_manifest(dir / "manifest.csv", slides);

  sio::Manifest m = sio::read_manifest(dir / "manifest.csv");
  ASSERT_EQ(m.slides.size(), 2u);
  EXPECT_EQ(m.slides[0].label, 3);
  EXPECT_EQ(m.slides[0].feature_paths.size(), 2u);
  EXPECT_EQ(m.slides[0].feature_paths.at(5.0), dir / "features/s1_5x.csv");
  EXPECT_EQ(m.slides[1].feature_paths.at(20.0), dir / "features/s2_20x.csv");

  EXPECT_EQ(sio::parse_label("LGSC", "x"), 3);
  EXPECT_EQ(sio::parse_label("0", "x"), 0);
  EXPECT_THROW(sio::parse_label("7", "x"), IoError);
  EXPECT_THROW(sio::parse_label("bogus", "x"), IoError);
}

TEST(Manifest, MalformedHeaderRejected) {
  fs::path dir = temp_dir("manifest_bad");
  std::ofstream(dir / "m.csv") << "slide,patient\n";
  EXPECT_THROW(sio::read_manifest(dir / "m.csv"), IoError);
  EXPECT_THROW(sio::read_manifest(dir / "missing.csv"), IoError);
}

TEST(Synth, DeterministicByteIdenticalTrees) {
  sio::SynthConfig cfg;
  cfg.n_patients = 5;
  cfg.grid_extent = 2;
  cfg.dim = 8;
  cfg.seed = 77;
  fs::path a = temp_dir("synth_a"), b = temp_dir("synth_b");
  sio::synth_dataset(a, cfg);
  sio::synth_dataset(b, cfg);
  auto ta = read_tree(a), tb = read_tree(b);
  ASSERT_FALSE(ta.empty());
  EXPECT_EQ(ta, tb);
}

TEST(Synth, ClassBalanceIsForced) {
  sio::SynthConfig cfg;
  cfg.n_patients = 30;
  cfg.grid_extent = 2;
  cfg.dim = 8;
  cfg.seed = 1;
  fs::path dir = temp_dir("synth_balance");
  sio::Manifest m = sio::read_manifest(sio::synth_dataset(dir, cfg));
  ASSERT_EQ(m.slides.size(), 30u);
  std::array<int, 5> counts{};
  for (const auto& s : m.slides) counts[static_cast<std::size_t>(s.label)]++;
  for (int c : counts) EXPECT_EQ(c, 6);
}

TEST(Synth, HighMagGridIsTwiceAsDense) {
  sio::SynthConfig cfg;
  cfg.n_patients = 1;
  cfg.grid_extent = 3;
  cfg.dim = 8;
  cfg.seed = 3;
  fs::path dir = temp_dir("synth_grid");
  sio::Manifest m = sio::read_manifest(sio::synth_dataset(dir, cfg));
  sio::FeatureSet low = sio::read_features(m.slides[0].feature_paths.at(5.0));
  sio::FeatureSet high = sio::read_features(m.slides[0].feature_paths.at(10.0));
  EXPECT_EQ(low.count(), 9u);
  EXPECT_EQ(high.count(), 36u);
  std::size_t max_row = 0;
  for (const auto& [key, _] : high.rows) max_row = std::max(max_row, key.first);
  EXPECT_EQ(max_row, 5u);
}

// Mean-pooled nearest-centroid classifier on a held-out half: the class signal
// must be recoverable by aggregation alone.
TEST(Synth, CentroidOracleSeparatesClasses) {
  sio::SynthConfig cfg;
  cfg.n_patients = 30;
  cfg.grid_extent = 4;
  cfg.dim = 16;
  cfg.class_separation = 4.0;
  cfg.seed = 2024;
  fs::path dir = temp_dir("synth_oracle");
  sio::Manifest m = sio::read_manifest(sio::synth_dataset(dir, cfg));

  auto pooled = [](const sio::SlideRecord& rec) {
    std::vector<double> mean;
    std::size_t n = 0;
    for (const auto& [mag, path] : rec.feature_paths) {
      sio::FeatureSet fsset = sio::read_features(path);
      if (mean.empty()) mean.assign(fsset.dim, 0.0);
      for (const auto& [key, v] : fsset.rows) {
        for (std::size_t j = 0; j < v.size(); ++j) mean[j] += v[j];
        ++n;
      }
    }
    for (double& x : mean) x /= static_cast<double>(n);
    return mean;
  };

  std::array<std::vector<double>, 5> centroid{};
  std::array<int, 5> train_count{};
  for (std::size_t i = 0; i < m.slides.size(); i += 2) {  // even slides train
    std::vector<double> v = pooled(m.slides[i]);
    auto& c = centroid[static_cast<std::size_t>(m.slides[i].label)];
    if (c.empty()) c.assign(v.size(), 0.0);
    for (std::size_t j = 0; j < v.size(); ++j) c[j] += v[j];
    train_count[static_cast<std::size_t>(m.slides[i].label)]++;
  }
  for (std::size_t k = 0; k < 5; ++k) {
    ASSERT_GT(train_count[k], 0);
    for (double& x : centroid[k]) x /= train_count[k];
  }

  std::array<int, 5> correct{}, total{};
  for (std::size_t i = 1; i < m.slides.size(); i += 2) {  // odd slides held out
    std::vector<double> v = pooled(m.slides[i]);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < 5; ++k) {
      double d = 0;
      for (std::size_t j = 0; j < v.size(); ++j) d += (v[j] - centroid[k][j]) * (v[j] - centroid[k][j]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    total[static_cast<std::size_t>(m.slides[i].label)]++;
    if (best == static_cast<std::size_t>(m.slides[i].label)) correct[static_cast<std::size_t>(m.slides[i].label)]++;
  }
  double bal_acc = 0;
  for (std::size_t k = 0; k < 5; ++k) bal_acc += static_cast<double>(correct[k]) / total[k];
  bal_acc /= 5.0;
  EXPECT_GE(bal_acc, 0.95);
}

TEST(Synth, InvalidConfigsRejected) {
  sio::SynthConfig cfg;
  cfg.classes = 4;
  EXPECT_THROW(sio::synth_dataset(temp_dir("synth_bad1"), cfg), ValidationError);
  cfg = sio::SynthConfig{};
  cfg.mags = {5.0, 20.0};
  EXPECT_THROW(sio::synth_dataset(temp_dir("synth_bad2"), cfg), ValidationError);
  cfg = sio::SynthConfig{};
  cfg.dim = 5;
  EXPECT_THROW(sio::synth_dataset(temp_dir("synth_bad3"), cfg), ValidationError);
}
