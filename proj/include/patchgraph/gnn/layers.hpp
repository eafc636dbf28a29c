#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "patchgraph/graphbuild/graph.hpp"
#include "patchgraph/numkit/ops.hpp"
#include "patchgraph/numkit/rng.hpp"
#include "patchgraph/numkit/tensor.hpp"

namespace patchgraph::gnn {

// Single-head GATv2 convolution. For an edge i<-j the score is
// e_ij = a . LeakyReLU(W_src h_i + W_dst h_j + b), attention is the softmax of
// e over j in N(i), and the output is sum_j alpha_ij (W_dst h_j).
struct GatV2Layer {
  numkit::Tensor w_src;  // d_in x d_out
  numkit::Tensor w_dst;  // d_in x d_out
  numkit::Tensor attn;   // d_out
  numkit::Tensor bias;   // d_out
  double leaky_slope = 0.2;
};

// Scores nodes with a width-1 GATv2 convolution, keeps the top ceil(ratio*N)
// and gates kept features by tanh(score).
struct SagPoolLayer {
  GatV2Layer score;
  double ratio = 0.5;
};

struct BoundGatV2 {
  numkit::Var w_src, w_dst, attn, bias;
  double leaky_slope = 0.2;
};

struct BoundSagPool {
  BoundGatV2 score;
  double ratio = 0.5;
};

inline BoundGatV2 bind_layer(numkit::Tape& tape, const GatV2Layer& layer) {
  return {tape.insert(layer.w_src), tape.insert(layer.w_dst), tape.insert(layer.attn),
          tape.insert(layer.bias), layer.leaky_slope};
}

// Directed edge arrays: (src -> dst) both ways per undirected pair, self-loops once.
struct EdgeIndex {
  std::vector<std::size_t> src, dst;
  std::size_t size() const { return src.size(); }
};

inline EdgeIndex directed_edges(const graphbuild::EdgeList& undirected) {
  EdgeIndex e;
  e.src.reserve(2 * undirected.size());
  e.dst.reserve(2 * undirected.size());
  for (auto [a, b] : undirected) {
    e.src.push_back(a);
    e.dst.push_back(b);
    if (a != b) {
      e.src.push_back(b);
      e.dst.push_back(a);
    }
  }
  return e;
}

inline numkit::Var gatv2_forward(const BoundGatV2& layer, const numkit::Var& h,
                                 const EdgeIndex& edges, std::size_t n_nodes) {
  if (h.shape().size() != 2 || h.shape()[0] != n_nodes) {
    throw ValidationError("gatv2_forward: node feature matrix has the wrong shape");
  }
  numkit::Var s = numkit::matmul(h, layer.w_src);
  numkit::Var t = numkit::matmul(h, layer.w_dst);
  numkit::Var s_dst = numkit::gather_rows(s, edges.dst);
  numkit::Var t_src = numkit::gather_rows(t, edges.src);
  numkit::Var z = numkit::leaky_relu(
      numkit::add_rowvec(numkit::add(s_dst, t_src), layer.bias), layer.leaky_slope);
  numkit::Var e = numkit::matmul(z, layer.attn);                       // M x 1
  numkit::Var alpha = numkit::segment_softmax(e, edges.dst, n_nodes);  // throws on isolated nodes
  numkit::Var messages = numkit::mul_colvec(t_src, alpha);
  return numkit::segment_sum(messages, edges.dst, n_nodes);
}

struct SagPoolResult {
  numkit::Var features;              // k x d, gated by tanh(score)
  graphbuild::EdgeList edges;        // induced subgraph, self-loops retained
  std::vector<std::size_t> kept;     // original node indices, ascending by tie key
};

// Top-k selection is ordered by (score desc, tie key asc). The tie key
// defaults to the node index; callers wanting permutation invariance pass the
// (mag,row,col) identities. Selection is treated as constant for gradients.
inline SagPoolResult sagpool_forward(const BoundSagPool& pool, const numkit::Var& h,
                                     const graphbuild::EdgeList& edges,
                                     const std::vector<graphbuild::NodeKey>* tie_keys = nullptr) {
  std::size_t n = h.shape().size() == 2 ? h.shape()[0] : 0;
  if (n == 0) throw ValidationError("sagpool_forward: empty graph");
  if (!(pool.ratio > 0.0 && pool.ratio <= 1.0)) {
    throw ValidationError("sagpool_forward: ratio must lie in (0, 1]");
  }
  if (tie_keys && tie_keys->size() != n) {
    throw ValidationError("sagpool_forward: tie key count mismatch");
  }

  numkit::Var scores = gatv2_forward(pool.score, h, directed_edges(edges), n);  // N x 1
  std::span<const double> sv = scores.values();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sv[a] != sv[b]) return sv[a] > sv[b];
    if (tie_keys) return (*tie_keys)[a] < (*tie_keys)[b];
    return a < b;
  });
  std::size_t k = static_cast<std::size_t>(std::ceil(pool.ratio * static_cast<double>(n)));
  k = std::max<std::size_t>(1, std::min(k, n));
  order.resize(k);

  // canonical output order: ascending tie key (node index when keys are absent)
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (tie_keys) return (*tie_keys)[a] < (*tie_keys)[b];
    return a < b;
  });

  std::vector<std::size_t> new_index(n, n);
  for (std::size_t i = 0; i < order.size(); ++i) new_index[order[i]] = i;

  SagPoolResult result;
  result.kept = order;
  numkit::Var kept_h = numkit::gather_rows(h, order);
  numkit::Var kept_scores = numkit::gather_rows(scores, order);
  result.features = numkit::mul_colvec(kept_h, numkit::tanh(kept_scores));
  for (auto [a, b] : edges) {
    if (new_index[a] < n && new_index[b] < n) {
      result.edges.emplace_back(new_index[a], new_index[b]);
    }
  }
  return result;
}

// Weight initialisation: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for
// weight matrices and attention vectors, zero biases.
inline numkit::Tensor init_weight(std::size_t fan_in, std::size_t fan_out, numkit::Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  numkit::Tensor w = numkit::Tensor::zeros({fan_in, fan_out}, /*requires_grad=*/true);
  for (double& x : w.data) x = rng.uniform(-bound, bound);
  return w;
}

inline numkit::Tensor init_vector(std::size_t fan_in, std::size_t n, numkit::Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  numkit::Tensor v = numkit::Tensor::zeros({n}, /*requires_grad=*/true);
  for (double& x : v.data) x = rng.uniform(-bound, bound);
  return v;
}

inline GatV2Layer init_gatv2(std::size_t d_in, std::size_t d_out, numkit::Rng& rng,
                             double leaky_slope = 0.2) {
  GatV2Layer layer;
  layer.w_src = init_weight(d_in, d_out, rng);
  layer.w_dst = init_weight(d_in, d_out, rng);
  layer.attn = init_vector(d_out, d_out, rng);
  layer.bias = numkit::Tensor::zeros({d_out}, /*requires_grad=*/true);
  layer.leaky_slope = leaky_slope;
  return layer;
}

}  // namespace patchgraph::gnn
