#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "patchgraph/gnn/layers.hpp"
#include "patchgraph/pipeline/config.hpp"
#include "patchgraph/slideio/manifest.hpp"

namespace patchgraph::gnn {

struct Linear {
  numkit::Tensor weight;  // d_in x d_out
  numkit::Tensor bias;    // d_out
};

inline Linear init_linear(std::size_t d_in, std::size_t d_out, numkit::Rng& rng) {
  return {init_weight(d_in, d_out, rng), numkit::Tensor::zeros({d_out}, /*requires_grad=*/true)};
}

// One or more message-passing layers followed by a pooling layer.
struct GraphBlock {
  std::vector<GatV2Layer> message_layers;
  SagPoolLayer pool;
};

// The whole-slide classifier: per-magnification input projection (with a
// shared merge layer under the concat feature spaces), graph blocks whose
// mean||max readouts are summed, dropout at train time, and a single linear
// head with five outputs.
struct PatchGraphModel {
  std::vector<double> magnifications;  // ascending
  graphbuild::FeatureSpaceMode mode = graphbuild::FeatureSpaceMode::kNaive;
  std::size_t raw_dim = 0;    // extractor feature width per magnification
  std::size_t embed_dim = 0;  // d, the embedding size per magnification
  std::vector<Linear> input_proj;  // one per magnification, raw_dim -> d
  std::optional<Linear> merge;     // 2d -> d, concat modes only
  std::vector<GraphBlock> blocks;
  Linear head;  // 2d -> 5
  double dropout_p = 0.0;

  // Named parameters in checkpoint order (magnifications ascending, then
  // merge, then blocks by index, then the head).
  std::vector<std::pair<std::string, numkit::Tensor*>> parameters() {
    std::vector<std::pair<std::string, numkit::Tensor*>> out;
    for (std::size_t mi = 0; mi < input_proj.size(); ++mi) {
      std::string base = "input_proj." + csvio::format_double(magnifications[mi]) + "x";
      out.emplace_back(base + ".weight", &input_proj[mi].weight);
      out.emplace_back(base + ".bias", &input_proj[mi].bias);
    }
    if (merge) {
      out.emplace_back("merge.weight", &merge->weight);
      out.emplace_back("merge.bias", &merge->bias);
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      std::string bb = "block" + std::to_string(b);
      for (std::size_t l = 0; l < blocks[b].message_layers.size(); ++l) {
        std::string base = bb + ".msg" + std::to_string(l);
        GatV2Layer& layer = blocks[b].message_layers[l];
        out.emplace_back(base + ".w_src", &layer.w_src);
        out.emplace_back(base + ".w_dst", &layer.w_dst);
        out.emplace_back(base + ".attn", &layer.attn);
        out.emplace_back(base + ".bias", &layer.bias);
      }
      GatV2Layer& score = blocks[b].pool.score;
      out.emplace_back(bb + ".score.w_src", &score.w_src);
      out.emplace_back(bb + ".score.w_dst", &score.w_dst);
      out.emplace_back(bb + ".score.attn", &score.attn);
      out.emplace_back(bb + ".score.bias", &score.bias);
    }
    out.emplace_back("head.weight", &head.weight);
    out.emplace_back("head.bias", &head.bias);
    return out;
  }
};

// Architecture sized from the config: graph_poolings blocks of
// message_passings GATv2 layers each, SAGPool ratio = pooling_factor,
// embedding_size = d. Deterministic in the rng.
inline PatchGraphModel init_model(const pipeline::ModelConfig& config, std::size_t feature_dim,
                                  numkit::Rng& rng) {
  config.validate();
  if (feature_dim == 0) throw ValidationError("init_model: feature_dim must be positive");
  PatchGraphModel model;
  model.magnifications = config.magnifications;
  model.mode = config.feature_space_mode;
  model.raw_dim = feature_dim;
  model.embed_dim = config.embedding_size;
  model.dropout_p = config.dropout;
  std::size_t d = config.embedding_size;
  for (std::size_t mi = 0; mi < config.magnifications.size(); ++mi) {
    model.input_proj.push_back(init_linear(feature_dim, d, rng));
  }
  if (model.mode != graphbuild::FeatureSpaceMode::kNaive) {
    model.merge = init_linear(2 * d, d, rng);
  }
  for (std::size_t b = 0; b < config.graph_poolings; ++b) {
    GraphBlock block;
    for (std::size_t l = 0; l < config.message_passings; ++l) {
      block.message_layers.push_back(init_gatv2(d, d, rng));
    }
    block.pool.score = init_gatv2(d, 1, rng);
    block.pool.ratio = config.pooling_factor;
    model.blocks.push_back(std::move(block));
  }
  model.head = init_linear(2 * d, slideio::kNumClasses, rng);
  return model;
}

struct BoundLinear {
  numkit::Var weight, bias;
};

struct BoundBlock {
  std::vector<BoundGatV2> message_layers;
  BoundSagPool pool;
};

// Model parameters inserted on a tape for one forward/backward pass.
struct BoundModel {
  PatchGraphModel* model = nullptr;
  std::vector<BoundLinear> input_proj;
  std::optional<BoundLinear> merge;
  std::vector<BoundBlock> blocks;
  BoundLinear head;
  std::vector<std::pair<numkit::Tensor*, numkit::Var>> params;  // parameters() order
};

inline BoundModel bind(numkit::Tape& tape, PatchGraphModel& model) {
  BoundModel bm;
  bm.model = &model;
  auto bind_linear = [&tape, &bm](Linear& lin) {
    BoundLinear b{tape.insert(lin.weight), tape.insert(lin.bias)};
    bm.params.emplace_back(&lin.weight, b.weight);
    bm.params.emplace_back(&lin.bias, b.bias);
    return b;
  };
  auto bind_gat = [&tape, &bm](GatV2Layer& layer) {
    BoundGatV2 b = bind_layer(tape, layer);
    bm.params.emplace_back(&layer.w_src, b.w_src);
    bm.params.emplace_back(&layer.w_dst, b.w_dst);
    bm.params.emplace_back(&layer.attn, b.attn);
    bm.params.emplace_back(&layer.bias, b.bias);
    return b;
  };
  for (Linear& lin : model.input_proj) bm.input_proj.push_back(bind_linear(lin));
  if (model.merge) bm.merge = bind_linear(*model.merge);
  for (GraphBlock& block : model.blocks) {
    BoundBlock bb;
    for (GatV2Layer& layer : block.message_layers) bb.message_layers.push_back(bind_gat(layer));
    bb.pool.score = bind_gat(block.pool.score);
    bb.pool.ratio = block.pool.ratio;
    bm.blocks.push_back(std::move(bb));
  }
  bm.head = bind_linear(model.head);
  return bm;
}

namespace detail {

// Raw node features projected to the shared width-d embedding.
inline numkit::Var project_inputs(numkit::Tape& tape, const BoundModel& bm,
                                  const graphbuild::MultiResGraph& graph) {
  const PatchGraphModel& model = *bm.model;
  std::size_t n = graph.node_count();
  std::size_t dim = model.raw_dim;

  if (model.mode == graphbuild::FeatureSpaceMode::kNaive) {
    if (graph.feature_width() != dim) {
      throw ValidationError("model_forward: graph feature width does not match the model");
    }
    if (model.magnifications.size() == 1) {
      numkit::Var x = tape.constant(graph.node_features);
      return numkit::add_rowvec(numkit::matmul(x, bm.input_proj[0].weight), bm.input_proj[0].bias);
    }
    // Project each magnification's nodes with its own map, then restore order.
    std::vector<std::vector<std::size_t>> part(model.magnifications.size());
    for (std::size_t i = 0; i < n; ++i) {
      bool found = false;
      for (std::size_t mi = 0; mi < model.magnifications.size(); ++mi) {
        if (graph.nodes[i].mag == model.magnifications[mi]) {
          part[mi].push_back(i);
          found = true;
          break;
        }
      }
      if (!found) throw ValidationError("model_forward: node magnification unknown to the model");
    }
    std::vector<std::size_t> position(n);
    std::size_t next = 0;
    for (const auto& idx : part) {
      for (std::size_t i : idx) position[i] = next++;
    }
    numkit::Var stacked;
    for (std::size_t mi = 0; mi < part.size(); ++mi) {
      numkit::Tensor sub = numkit::Tensor::zeros({part[mi].size(), dim});
      for (std::size_t r = 0; r < part[mi].size(); ++r) {
        std::copy_n(graph.node_features.data.data() + part[mi][r] * dim, dim,
                    sub.data.data() + r * dim);
      }
      numkit::Var proj = numkit::add_rowvec(
          numkit::matmul(tape.constant(sub), bm.input_proj[mi].weight), bm.input_proj[mi].bias);
      stacked = mi == 0 ? proj : numkit::concat_rows(stacked, proj);
    }
    return numkit::gather_rows(stacked, position);
  }

  // Concat modes: each d-slot is projected with its magnification's map, then
  // the 2d vector is merged to d by the shared layer.
  if (graph.feature_width() != 2 * dim) {
    throw ValidationError("model_forward: graph feature width does not match the model");
  }
  numkit::Tensor low_half = numkit::Tensor::zeros({n, dim});
  numkit::Tensor high_half = numkit::Tensor::zeros({n, dim});
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = graph.node_features.data.data() + i * 2 * dim;
    std::copy_n(src, dim, low_half.data.data() + i * dim);
    std::copy_n(src + dim, dim, high_half.data.data() + i * dim);
  }
  numkit::Var p_low = numkit::add_rowvec(
      numkit::matmul(tape.constant(low_half), bm.input_proj[0].weight), bm.input_proj[0].bias);
  numkit::Var p_high = numkit::add_rowvec(
      numkit::matmul(tape.constant(high_half), bm.input_proj[1].weight), bm.input_proj[1].bias);
  numkit::Var both = numkit::concat_cols(p_low, p_high);
  return numkit::add_rowvec(numkit::matmul(both, bm.merge->weight), bm.merge->bias);
}

}  // namespace detail

struct BlockOutput {
  numkit::Var state;              // pooled node features
  graphbuild::EdgeList edges;     // induced edges
  std::vector<std::size_t> kept;  // indices into the incoming node set
  numkit::Var readout;            // 1 x 2d, mean || max over kept nodes
};

// Message passing + ReLU per layer, SAGPool, then the mean||max readout.
inline BlockOutput block_forward(const BoundBlock& block, const numkit::Var& h,
                                 const graphbuild::EdgeList& edges,
                                 const std::vector<graphbuild::NodeKey>* tie_keys) {
  std::size_t n = h.shape()[0];
  if (n == 0) throw ValidationError("block_forward: empty graph");
  numkit::Var state = h;
  EdgeIndex directed = directed_edges(edges);
  for (const BoundGatV2& layer : block.message_layers) {
    state = numkit::relu(gatv2_forward(layer, state, directed, n));
  }
  SagPoolResult pooled = sagpool_forward(block.pool, state, edges, tie_keys);
  BlockOutput out;
  out.state = pooled.features;
  out.edges = std::move(pooled.edges);
  out.kept = std::move(pooled.kept);
  out.readout =
      numkit::concat_cols(numkit::reduce_mean_rows(pooled.features), numkit::reduce_max_rows(pooled.features));
  return out;
}

struct ForwardOutput {
  numkit::Var logits;                       // 1 x 5
  std::vector<std::size_t> nodes_per_block;  // node count after each pooling
};

// Full forward pass. Dropout (inverted, scale 1/(1-p)) is applied to the
// summed readout only when train_mode is set; rng is required then.
inline ForwardOutput model_forward(numkit::Tape& tape, const BoundModel& bm,
                                   const graphbuild::MultiResGraph& graph, bool train_mode,
                                   numkit::Rng* rng = nullptr) {
  const PatchGraphModel& model = *bm.model;
  if (graph.node_count() == 0) throw ValidationError("model_forward: empty graph");
  if (graph.mode != model.mode) {
    throw ValidationError("model_forward: graph feature space does not match the model");
  }
  if (graph.magnifications != model.magnifications) {
    throw ValidationError("model_forward: graph magnifications do not match the model");
  }

  numkit::Var h = detail::project_inputs(tape, bm, graph);
  std::vector<graphbuild::NodeKey> keys = graph.nodes;
  graphbuild::EdgeList edges = graph.edges;

  ForwardOutput out;
  numkit::Var wsi;
  for (std::size_t b = 0; b < bm.blocks.size(); ++b) {
    BlockOutput bo = block_forward(bm.blocks[b], h, edges, &keys);
    h = bo.state;
    edges = std::move(bo.edges);
    std::vector<graphbuild::NodeKey> kept_keys;
    kept_keys.reserve(bo.kept.size());
    for (std::size_t i : bo.kept) kept_keys.push_back(keys[i]);
    keys = std::move(kept_keys);
    out.nodes_per_block.push_back(keys.size());
    wsi = b == 0 ? bo.readout : numkit::add(wsi, bo.readout);
  }

  if (train_mode && model.dropout_p > 0.0) {
    if (rng == nullptr) throw ValidationError("model_forward: training dropout requires an rng");
    double keep = 1.0 - model.dropout_p;
    numkit::Tensor mask = numkit::Tensor::zeros({1, 2 * model.embed_dim});
    for (double& x : mask.data) x = rng->uniform() < keep ? 1.0 / keep : 0.0;
    wsi = numkit::mul(wsi, tape.constant(mask));
  }

  out.logits = numkit::add_rowvec(numkit::matmul(wsi, bm.head.weight), bm.head.bias);
  return out;
}

// Convenience inference entry point: fresh tape, eval mode.
inline std::array<double, 5> predict_logits(PatchGraphModel& model,
                                            const graphbuild::MultiResGraph& graph) {
  numkit::Tape tape;
  BoundModel bm = bind(tape, model);
  ForwardOutput out = model_forward(tape, bm, graph, /*train_mode=*/false);
  std::array<double, 5> logits{};
  std::span<const double> v = out.logits.values();
  std::copy_n(v.begin(), 5, logits.begin());
  return logits;
}

inline std::array<double, 5> softmax(const std::array<double, 5>& logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::array<double, 5> probs{};
  double denom = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

}  // namespace patchgraph::gnn
