#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "patchgraph/graphbuild/graph.hpp"
#include "patchgraph/numkit/rng.hpp"

namespace gb = patchgraph::graphbuild;
namespace sio = patchgraph::slideio;
namespace nk = patchgraph::numkit;
using patchgraph::ValidationError;

namespace {

sio::PatchGrid full_grid(double mag, std::size_t rows, std::size_t cols) {
  sio::PatchGrid g;
  g.magnification = mag;
  g.rows = rows;
  g.cols = cols;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) g.entries.push_back({r, c, c, r, 1.0});
  return g;
}

// Brute-force Chebyshev-distance-1 pair count over all entry pairs.
std::size_t chebyshev_oracle(const sio::PatchGrid& g) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < g.entries.size(); ++i) {
    for (std::size_t j = i + 1; j < g.entries.size(); ++j) {
      long long dr = std::llabs(static_cast<long long>(g.entries[i].row) -
                                static_cast<long long>(g.entries[j].row));
      long long dc = std::llabs(static_cast<long long>(g.entries[i].col) -
                                static_cast<long long>(g.entries[j].col));
      if (std::max(dr, dc) == 1) ++count;
    }
  }
  return count;
}

std::size_t neighbor_edges(const gb::EdgeList& edges) {
  std::size_t n = 0;
  for (auto [a, b] : edges) n += a != b;
  return n;
}

std::size_t self_loops(const gb::EdgeList& edges) {
  std::size_t n = 0;
  for (auto [a, b] : edges) n += a == b;
  return n;
}

sio::FeatureSet make_features(double mag, std::size_t dim,
                              const std::vector<std::pair<sio::GridKey, std::vector<double>>>& rows) {
  sio::FeatureSet fs;
  fs.magnification = mag;
  fs.dim = dim;
  for (const auto& [key, v] : rows) fs.rows.emplace(key, v);
  return fs;
}

sio::FeatureSet random_features(double mag, std::size_t rows, std::size_t cols, std::size_t dim,
                                nk::Rng& rng) {
  sio::FeatureSet fs;
  fs.magnification = mag;
  fs.dim = dim;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::vector<double> v(dim);
      for (double& x : v) x = rng.normal();
      fs.rows.emplace(sio::GridKey{r, c}, std::move(v));
    }
  }
  return fs;
}

}  // namespace

TEST(IntraEdges, SingleNode) {
  gb::EdgeList e = gb::build_intra_edges(full_grid(10, 1, 1));
  EXPECT_EQ(neighbor_edges(e), 0u);
  EXPECT_EQ(self_loops(e), 1u);
}

TEST(IntraEdges, ThreeByThree) {
  gb::EdgeList e = gb::build_intra_edges(full_grid(10, 3, 3));
  EXPECT_EQ(neighbor_edges(e), 20u);
  EXPECT_EQ(self_loops(e), 9u);
}

TEST(IntraEdges, Strip) {
  EXPECT_EQ(neighbor_edges(gb::build_intra_edges(full_grid(10, 1, 4))), 3u);
}

TEST(IntraEdges, BruteForceOracleOnAllSmallGrids) {
  for (std::size_t r = 1; r <= 6; ++r) {
    for (std::size_t c = 1; c <= 6; ++c) {
      sio::PatchGrid g = full_grid(5, r, c);
      std::size_t got = neighbor_edges(gb::build_intra_edges(g));
      EXPECT_EQ(got, chebyshev_oracle(g)) << r << "x" << c;
      std::size_t closed_form = r * (c - 1) + (r - 1) * c + 2 * (r - 1) * (c - 1);
      EXPECT_EQ(got, closed_form) << r << "x" << c;
      EXPECT_EQ(self_loops(gb::build_intra_edges(g)), r * c);
    }
  }
}

TEST(IntraEdges, SparseGridMatchesOracle) {
  sio::PatchGrid g;
  g.magnification = 10;
  g.rows = 4;
  g.cols = 4;
  for (auto [r, c] : std::vector<std::pair<std::size_t, std::size_t>>{
           {0, 0}, {0, 2}, {1, 1}, {2, 2}, {3, 0}, {3, 3}, {2, 0}}) {
    g.entries.push_back({r, c, c, r, 1.0});
  }
  EXPECT_EQ(neighbor_edges(gb::build_intra_edges(g)), chebyshev_oracle(g));
}

TEST(CrossEdges, FullPairGivesFourChildrenPerParent) {
  gb::EdgeList e = gb::build_cross_edges(full_grid(5, 2, 2), full_grid(10, 4, 4));
  EXPECT_EQ(e.size(), 16u);
  std::map<std::size_t, int> per_parent;
  for (auto [lo, hi] : e) per_parent[lo]++;
  for (auto [lo, n] : per_parent) EXPECT_EQ(n, 4);
  EXPECT_EQ(per_parent.size(), 4u);
}

TEST(CrossEdges, FilteredChildrenAreSkipped) {
  sio::PatchGrid high;
  high.magnification = 10;
  high.rows = 2;
  high.cols = 2;
  high.entries.push_back({0, 0, 0, 0, 1.0});
  high.entries.push_back({1, 1, 1, 1, 1.0});
  gb::EdgeList e = gb::build_cross_edges(full_grid(5, 1, 1), high);
  EXPECT_EQ(e.size(), 2u);

  // a parent whose four children were all filtered out gets no cross edges
  sio::PatchGrid low2 = full_grid(5, 1, 2);
  sio::PatchGrid high2 = high;  // children of (0,1) -> rows 0-1, cols 2-3: none exist
  gb::EdgeList e2 = gb::build_cross_edges(low2, high2);
  for (auto [lo, hi] : e2) EXPECT_EQ(lo, 0u);
  EXPECT_EQ(e2.size(), 2u);
}

TEST(CrossEdges, RatioMustBeTwo) {
  EXPECT_THROW(gb::build_cross_edges(full_grid(5, 1, 1), full_grid(20, 2, 2)), ValidationError);
}

TEST(Assemble, NaiveKeepsFeaturesVerbatim) {
  auto low = make_features(5, 3, {{{0, 0}, {1, 2, 3}}, {{0, 1}, {4, 5, 6}}});
  gb::MultiResGraph g = gb::assemble_graph({low}, gb::FeatureSpaceMode::kNaive);
  EXPECT_EQ(g.feature_width(), 3u);
  EXPECT_EQ(g.node_count(), 2u);
  EXPECT_EQ(g.node_features.at(0, 0), 1.0);
  EXPECT_EQ(g.node_features.at(1, 2), 6.0);
  EXPECT_EQ(self_loops(g.edges), 2u);
}

TEST(Assemble, ConcatZeroLayout) {
  auto low = make_features(5, 2, {{{0, 0}, {1, 2}}});
  auto high = make_features(10, 2, {{{0, 0}, {7, 8}}, {{1, 1}, {9, 10}}});
  gb::MultiResGraph g = gb::assemble_graph({low, high}, gb::FeatureSpaceMode::kConcatZero);
  EXPECT_EQ(g.feature_width(), 4u);
  ASSERT_EQ(g.node_count(), 3u);
  // low node: [own | 0]
  EXPECT_EQ(g.node_features.at(0, 0), 1.0);
  EXPECT_EQ(g.node_features.at(0, 1), 2.0);
  EXPECT_EQ(g.node_features.at(0, 2), 0.0);
  EXPECT_EQ(g.node_features.at(0, 3), 0.0);
  // high nodes: [0 | own]
  EXPECT_EQ(g.node_features.at(1, 0), 0.0);
  EXPECT_EQ(g.node_features.at(1, 1), 0.0);
  EXPECT_EQ(g.node_features.at(1, 2), 7.0);
  EXPECT_EQ(g.node_features.at(2, 3), 10.0);
}

TEST(Assemble, ConcatAvgUsesOtherMagnificationSlideMean) {
  auto low = make_features(5, 2, {{{0, 0}, {1, 2}}});
  auto high = make_features(10, 2, {{{0, 0}, {2, 4}}, {{0, 1}, {6, 8}}});
  gb::MultiResGraph g = gb::assemble_graph({low, high}, gb::FeatureSpaceMode::kConcatAvg);
  // low node high-half = mean of the two high features
  EXPECT_DOUBLE_EQ(g.node_features.at(0, 2), 4.0);
  EXPECT_DOUBLE_EQ(g.node_features.at(0, 3), 6.0);
  // high node low-half = mean of the single low feature
  EXPECT_DOUBLE_EQ(g.node_features.at(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.node_features.at(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(g.node_features.at(1, 2), 2.0);
}

TEST(Assemble, ConcatNeedsTwoMagnifications) {
  auto low = make_features(5, 2, {{{0, 0}, {1, 2}}});
  EXPECT_THROW(gb::assemble_graph({low}, gb::FeatureSpaceMode::kConcatZero), ValidationError);
  EXPECT_THROW(gb::assemble_graph({low}, gb::FeatureSpaceMode::kConcatAvg), ValidationError);
}

TEST(Assemble, CrossEdgesLinkDoubledMagnificationsOnly) {
  nk::Rng rng(5);
  auto low = random_features(5, 2, 2, 3, rng);
  auto high = random_features(10, 4, 4, 3, rng);
  gb::MultiResGraph g = gb::assemble_graph({low, high}, gb::FeatureSpaceMode::kConcatZero);
  EXPECT_EQ(g.node_count(), 20u);
  std::size_t cross = 0;
  for (auto [a, b] : g.edges) {
    const auto& na = g.nodes[a];
    const auto& nb = g.nodes[b];
    if (na.mag != nb.mag) {
      EXPECT_DOUBLE_EQ(std::max(na.mag, nb.mag), 2.0 * std::min(na.mag, nb.mag));
      ++cross;
    }
  }
  EXPECT_EQ(cross, 16u);
  EXPECT_EQ(self_loops(g.edges), 20u);  // every node keeps a self-loop
}

TEST(Subsample, IdentityWhenSmall) {
  nk::Rng rng(1);
  auto low = random_features(5, 3, 3, 4, rng);
  auto high = random_features(10, 6, 6, 4, rng);
  nk::Rng sub(2);
  auto out = gb::subsample_patches({low, high}, 6000, sub);
  EXPECT_EQ(out[0].count(), 9u);
  EXPECT_EQ(out[1].count(), 36u);
  EXPECT_TRUE(out[0] == low);
  EXPECT_TRUE(out[1] == high);
}

TEST(Subsample, FamilyArithmetic) {
  nk::Rng rng(1);
  auto low = random_features(5, 2, 2, 4, rng);    // 4 low patches
  auto high = random_features(10, 4, 4, 4, rng);  // each with exactly 4 children
  nk::Rng sub(11);
  auto out = gb::subsample_patches({low, high}, 10, sub);
  EXPECT_EQ(out[0].count(), 2u);
  EXPECT_EQ(out[1].count(), 8u);
  // each kept child belongs to a kept parent
  for (const auto& [key, _] : out[1].rows) {
    EXPECT_TRUE(out[0].rows.count({key.first / 2, key.second / 2}));
  }
}

TEST(Subsample, SingleMagnificationSamplesDirectly) {
  nk::Rng rng(1);
  auto only = random_features(10, 4, 4, 4, rng);
  nk::Rng sub(3);
  auto out = gb::subsample_patches({only}, 5, sub);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].count(), 5u);
  for (const auto& [key, v] : out[0].rows) EXPECT_EQ(v, only.rows.at(key));
}

TEST(Subsample, DeterministicInSeed) {
  nk::Rng rng(1);
  auto low = random_features(5, 4, 4, 4, rng);
  auto high = random_features(10, 8, 8, 4, rng);
  nk::Rng s1(42), s2(42);
  auto a = gb::subsample_patches({low, high}, 30, s1);
  auto b = gb::subsample_patches({low, high}, 30, s2);
  EXPECT_TRUE(a[0] == b[0]);
  EXPECT_TRUE(a[1] == b[1]);
}

TEST(EdgeCsv, DumpsNodeKeys) {
  auto low = make_features(5, 2, {{{0, 0}, {1, 2}}});
  auto high = make_features(10, 2, {{{0, 0}, {3, 4}}});
  gb::MultiResGraph g = gb::assemble_graph({low, high}, gb::FeatureSpaceMode::kConcatZero);
  auto dir = std::filesystem::temp_directory_path() / "patchgraph_test_edges";
  std::filesystem::create_directories(dir);
  gb::write_edge_csv(dir / "edges.csv", g);
  auto lines = patchgraph::csvio::read_lines(dir / "edges.csv");
  EXPECT_EQ(lines[0], "src_mag,src_row,src_col,dst_mag,dst_row,dst_col");
  EXPECT_EQ(lines.size(), 1u + g.edges.size());
}

TEST(ModeParsing, RoundTrip) {
  EXPECT_EQ(gb::parse_feature_space_mode("naive"), gb::FeatureSpaceMode::kNaive);
  EXPECT_EQ(gb::parse_feature_space_mode("concat_zero"), gb::FeatureSpaceMode::kConcatZero);
  EXPECT_EQ(gb::parse_feature_space_mode("concat_avg"), gb::FeatureSpaceMode::kConcatAvg);
  EXPECT_THROW(gb::parse_feature_space_mode("bogus"), ValidationError);
  EXPECT_EQ(gb::to_string(gb::FeatureSpaceMode::kConcatAvg), "concat_avg");
}
