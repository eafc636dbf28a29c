#pragma once

#include <algorithm>
#include <compare>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "patchgraph/csvio.hpp"
#include "patchgraph/errors.hpp"
#include "patchgraph/numkit/rng.hpp"
#include "patchgraph/numkit/tensor.hpp"
#include "patchgraph/slideio/features.hpp"
#include "patchgraph/slideio/grid.hpp"

namespace patchgraph::graphbuild {

enum class FeatureSpaceMode { kNaive, kConcatZero, kConcatAvg };

inline FeatureSpaceMode parse_feature_space_mode(const std::string& s) {
  if (s == "naive") return FeatureSpaceMode::kNaive;
  if (s == "concat_zero") return FeatureSpaceMode::kConcatZero;
  if (s == "concat_avg") return FeatureSpaceMode::kConcatAvg;
  throw ValidationError("unknown feature space mode '" + s +
                        "' (expected naive, concat_zero or concat_avg)");
}

inline std::string to_string(FeatureSpaceMode m) {
  switch (m) {
    case FeatureSpaceMode::kNaive: return "naive";
    case FeatureSpaceMode::kConcatZero: return "concat_zero";
    case FeatureSpaceMode::kConcatAvg: return "concat_avg";
  }
  return "?";
}

// Permutation-independent node identity.
struct NodeKey {
  double mag = 0.0;
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const NodeKey&) const = default;
};

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;  // undirected, incl. self-loops

// Patch graph spanning one or two magnifications. Node features are laid out
// [low-half | high-half] under the concat modes (F = 2D) and are the raw
// D-vectors under naive (F = D).
struct MultiResGraph {
  std::vector<NodeKey> nodes;
  numkit::Tensor node_features;  // N x F
  EdgeList edges;
  std::vector<double> magnifications;  // ascending, 1 or 2 entries
  std::size_t raw_dim = 0;             // D
  FeatureSpaceMode mode = FeatureSpaceMode::kNaive;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t feature_width() const { return node_features.rank() == 2 ? node_features.shape[1] : 0; }
};

// Undirected lattice edges: two same-magnification patches are neighbours iff
// their (row, col) Chebyshev distance is 1 (lateral and diagonal first-order
// neighbours). One self-loop per node.
inline EdgeList build_intra_edges(const slideio::PatchGrid& grid) {
  std::map<slideio::GridKey, std::size_t> index;
  for (std::size_t i = 0; i < grid.entries.size(); ++i) {
    slideio::GridKey key{grid.entries[i].row, grid.entries[i].col};
    if (!index.emplace(key, i).second) {
      throw ValidationError("build_intra_edges: duplicate grid entry (" + std::to_string(key.first) +
                            "," + std::to_string(key.second) + ")");
    }
  }
  EdgeList edges;
  for (std::size_t i = 0; i < grid.entries.size(); ++i) {
    edges.emplace_back(i, i);
    std::size_t r = grid.entries[i].row, c = grid.entries[i].col;
    // Only the E, SW, S, SE neighbours: each unordered pair is visited once.
    const long long deltas[4][2] = {{0, 1}, {1, -1}, {1, 0}, {1, 1}};
    for (const auto& d : deltas) {
      long long nr = static_cast<long long>(r) + d[0];
      long long nc = static_cast<long long>(c) + d[1];
      if (nr < 0 || nc < 0) continue;
      auto it = index.find({static_cast<std::size_t>(nr), static_cast<std::size_t>(nc)});
      if (it != index.end()) edges.emplace_back(i, it->second);
    }
  }
  return edges;
}

// Parent-child edges between a magnification-m grid and its 2m grid: low patch
// (r, c) connects to the high patches (2r+dr, 2c+dc) that exist.
inline EdgeList build_cross_edges(const slideio::PatchGrid& low, const slideio::PatchGrid& high) {
  if (high.magnification != 2.0 * low.magnification) {
    throw ValidationError("build_cross_edges: magnification ratio must be exactly 2 (got " +
                          csvio::format_double(low.magnification) + "x and " +
                          csvio::format_double(high.magnification) + "x)");
  }
  std::map<slideio::GridKey, std::size_t> high_index;
  for (std::size_t i = 0; i < high.entries.size(); ++i) {
    high_index.emplace(slideio::GridKey{high.entries[i].row, high.entries[i].col}, i);
  }
  EdgeList edges;
  for (std::size_t i = 0; i < low.entries.size(); ++i) {
    std::size_t r = low.entries[i].row, c = low.entries[i].col;
    for (std::size_t dr = 0; dr < 2; ++dr) {
      for (std::size_t dc = 0; dc < 2; ++dc) {
        auto it = high_index.find({2 * r + dr, 2 * c + dc});
        if (it != high_index.end()) edges.emplace_back(i, it->second);
      }
    }
  }
  return edges;
}

// Grid reconstructed from feature keys; pitch defaults to 1 as the synthetic
// feature files carry no native pixel geometry.
inline slideio::PatchGrid grid_from_features(const slideio::FeatureSet& fs, std::size_t pitch = 1) {
  slideio::PatchGrid grid;
  grid.magnification = fs.magnification;
  for (const auto& [key, _] : fs.rows) {
    grid.entries.push_back({key.first, key.second, key.second * pitch, key.first * pitch, 1.0});
    grid.rows = std::max(grid.rows, key.first + 1);
    grid.cols = std::max(grid.cols, key.second + 1);
  }
  return grid;
}

// Builds the full multi-resolution graph from per-magnification features
// (ascending magnification, equal dims). Node order is (mag, row, col).
inline MultiResGraph assemble_graph(const std::vector<slideio::FeatureSet>& features,
                                    FeatureSpaceMode mode) {
  if (features.empty() || features.size() > 2) {
    throw ValidationError("assemble_graph: expected one or two magnifications");
  }
  if (mode != FeatureSpaceMode::kNaive && features.size() != 2) {
    throw ValidationError("assemble_graph: concat feature spaces need two magnifications");
  }
  if (features.size() == 2 && features[1].magnification <= features[0].magnification) {
    throw ValidationError("assemble_graph: magnifications must be ascending");
  }
  std::size_t dim = features[0].dim;
  for (const auto& fs : features) {
    if (fs.dim != dim) throw ValidationError("assemble_graph: feature dims differ across magnifications");
  }
  std::size_t total = 0;
  for (const auto& fs : features) total += fs.count();
  if (total == 0) throw ValidationError("assemble_graph: no patches");

  MultiResGraph graph;
  graph.mode = mode;
  graph.raw_dim = dim;
  for (const auto& fs : features) graph.magnifications.push_back(fs.magnification);

  // Slide-level means per magnification, for concat_avg other-halves.
  std::vector<std::vector<double>> mag_mean(features.size(), std::vector<double>(dim, 0.0));
  for (std::size_t mi = 0; mi < features.size(); ++mi) {
    for (const auto& [key, v] : features[mi].rows) {
      for (std::size_t j = 0; j < dim; ++j) mag_mean[mi][j] += v[j];
    }
    if (!features[mi].rows.empty()) {
      for (double& x : mag_mean[mi]) x /= static_cast<double>(features[mi].rows.size());
    }
  }

  std::size_t width = mode == FeatureSpaceMode::kNaive ? dim : 2 * dim;
  graph.node_features = numkit::Tensor::zeros({total, width});

  std::vector<std::size_t> offset(features.size(), 0);  // node index of each grid's first entry
  std::size_t next = 0;
  for (std::size_t mi = 0; mi < features.size(); ++mi) {
    offset[mi] = next;
    for (const auto& [key, v] : features[mi].rows) {
      graph.nodes.push_back({features[mi].magnification, key.first, key.second});
      double* out = graph.node_features.data.data() + next * width;
      switch (mode) {
        case FeatureSpaceMode::kNaive:
          std::copy(v.begin(), v.end(), out);
          break;
        case FeatureSpaceMode::kConcatZero:
          std::copy(v.begin(), v.end(), out + mi * dim);  // the other half stays zero
          break;
        case FeatureSpaceMode::kConcatAvg: {
          std::copy(v.begin(), v.end(), out + mi * dim);
          const std::vector<double>& other = mag_mean[1 - mi];
          std::copy(other.begin(), other.end(), out + (1 - mi) * dim);
          break;
        }
      }
      ++next;
    }
  }

  std::vector<slideio::PatchGrid> grids;
  grids.reserve(features.size());
  for (const auto& fs : features) grids.push_back(grid_from_features(fs));
  for (std::size_t mi = 0; mi < grids.size(); ++mi) {
    for (auto [a, b] : build_intra_edges(grids[mi])) {
      graph.edges.emplace_back(offset[mi] + a, offset[mi] + b);
    }
  }
  if (grids.size() == 2) {
    for (auto [lo, hi] : build_cross_edges(grids[0], grids[1])) {
      graph.edges.emplace_back(offset[0] + lo, offset[1] + hi);
    }
  }
  return graph;
}

// Training-time patch dropout. Low-magnification patches are drawn uniformly
// without replacement, each bringing its existing children, until the next
// family would overflow max_patches. Identity when already small enough;
// single-magnification inputs sample patches directly.
inline std::vector<slideio::FeatureSet> subsample_patches(
    const std::vector<slideio::FeatureSet>& features, std::size_t max_patches, numkit::Rng& rng) {
  if (max_patches == 0) throw ValidationError("subsample_patches: max_patches must be positive");
  std::size_t total = 0;
  for (const auto& fs : features) total += fs.count();
  if (total <= max_patches) return features;

  if (features.size() == 1) {
    std::vector<slideio::GridKey> keys;
    keys.reserve(features[0].rows.size());
    for (const auto& [key, _] : features[0].rows) keys.push_back(key);
    rng.shuffle(keys);
    keys.resize(max_patches);
    slideio::FeatureSet out;
    out.magnification = features[0].magnification;
    out.dim = features[0].dim;
    for (const auto& key : keys) out.rows.emplace(key, features[0].rows.at(key));
    return {std::move(out)};
  }

  if (features.size() != 2) throw ValidationError("subsample_patches: expected one or two magnifications");
  const slideio::FeatureSet& low = features[0];
  const slideio::FeatureSet& high = features[1];
  std::vector<slideio::GridKey> low_keys;
  low_keys.reserve(low.rows.size());
  for (const auto& [key, _] : low.rows) low_keys.push_back(key);
  rng.shuffle(low_keys);

  slideio::FeatureSet out_low, out_high;
  out_low.magnification = low.magnification;
  out_low.dim = low.dim;
  out_high.magnification = high.magnification;
  out_high.dim = high.dim;
  std::size_t taken = 0;
  for (const auto& key : low_keys) {
    std::vector<slideio::GridKey> children;
    for (std::size_t dr = 0; dr < 2; ++dr) {
      for (std::size_t dc = 0; dc < 2; ++dc) {
        slideio::GridKey child{2 * key.first + dr, 2 * key.second + dc};
        if (high.rows.count(child)) children.push_back(child);
      }
    }
    std::size_t family = 1 + children.size();
    if (taken + family > max_patches) break;
    out_low.rows.emplace(key, low.rows.at(key));
    for (const auto& child : children) out_high.rows.emplace(child, high.rows.at(child));
    taken += family;
  }
  return {std::move(out_low), std::move(out_high)};
}

// Debug dump of the undirected edge list (self-loops included).
inline void write_edge_csv(const std::filesystem::path& path, const MultiResGraph& graph) {
  std::ostringstream out;
  out << "src_mag,src_row,src_col,dst_mag,dst_row,dst_col\n";
  for (auto [a, b] : graph.edges) {
    const NodeKey& s = graph.nodes[a];
    const NodeKey& d = graph.nodes[b];
    out << csvio::format_double(s.mag) << ',' << s.row << ',' << s.col << ','
        << csvio::format_double(d.mag) << ',' << d.row << ',' << d.col << '\n';
  }
  csvio::write_text(path, out.str());
}

}  // namespace patchgraph::graphbuild
