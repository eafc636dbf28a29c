#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchgraph/csvio.hpp"
#include "patchgraph/errors.hpp"
#include "patchgraph/graphbuild/graph.hpp"

namespace patchgraph::pipeline {

// The 13 tuned hyperparameters plus the architecture/run switches. Defaults
// are the baseline 5x+10x configuration. Validation pins each hyperparameter
// to the range spanned by the tuned models.
struct ModelConfig {
  double learning_rate = 1e-4;
  double lr_decay = 0.9;
  std::size_t lr_patience = 10;
  double beta1 = 0.9;
  double beta2 = 0.9999;
  double epsilon = 1e-5;
  double dropout = 0.2;
  double weight_decay = 1e-2;
  std::size_t max_patches = 6000;
  std::size_t message_passings = 3;
  std::size_t graph_poolings = 4;
  double pooling_factor = 0.9;
  std::size_t embedding_size = 512;

  graphbuild::FeatureSpaceMode feature_space_mode = graphbuild::FeatureSpaceMode::kConcatAvg;
  std::vector<double> magnifications = {5.0, 10.0};
  std::uint64_t seed = 0;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 0;  // 0 derives 3 * lr_patience

  std::size_t effective_early_stop() const {
    return early_stop_patience == 0 ? 3 * lr_patience : early_stop_patience;
  }

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

inline void ModelConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("config: " + msg);
  };
  check(learning_rate >= 1e-5 && learning_rate <= 2e-3, "learning_rate must lie in [1e-5, 2e-3]");
  check(lr_decay >= 0.45 && lr_decay <= 0.9, "lr_decay must lie in [0.45, 0.9]");
  check(lr_patience >= 10 && lr_patience <= 20, "lr_patience must lie in [10, 20]");
  check(beta1 >= 0.8 && beta1 <= 0.95, "beta1 must lie in [0.8, 0.95]");
  check(beta2 >= 0.95 && beta2 <= 0.99999, "beta2 must lie in [0.95, 0.99999]");
  check(epsilon >= 1e-7 && epsilon <= 1e-2, "epsilon must lie in [1e-7, 1e-2]");
  check(dropout >= 0.0 && dropout <= 0.4, "dropout must lie in [0, 0.4]");
  check(weight_decay >= 1e-3 && weight_decay <= 1e-1, "weight_decay must lie in [1e-3, 1e-1]");
  check(max_patches >= 1000 && max_patches <= 14000, "max_patches must lie in [1000, 14000]");
  check(message_passings >= 1 && message_passings <= 3, "message_passings must lie in [1, 3]");
  check(graph_poolings >= 1 && graph_poolings <= 4, "graph_poolings must lie in [1, 4]");
  check(pooling_factor >= 0.45 && pooling_factor <= 0.9, "pooling_factor must lie in [0.45, 0.9]");
  check(embedding_size >= 256 && embedding_size <= 1024, "embedding_size must lie in [256, 1024]");
  check(!magnifications.empty() && magnifications.size() <= 2,
        "magnifications must name one or two magnifications");
  for (double m : magnifications) check(m > 0, "magnifications must be positive");
  if (magnifications.size() == 2) {
    check(magnifications[1] == 2.0 * magnifications[0],
          "two magnifications must be a consecutive doubling pair");
  } else {
    check(feature_space_mode == graphbuild::FeatureSpaceMode::kNaive,
          "concat feature spaces require two magnifications");
  }
  check(max_epochs >= 1, "max_epochs must be positive");
}

inline nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["learning_rate"] = learning_rate;
  j["lr_decay"] = lr_decay;
  j["lr_patience"] = lr_patience;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["epsilon"] = epsilon;
  j["dropout"] = dropout;
  j["weight_decay"] = weight_decay;
  j["max_patches"] = max_patches;
  j["message_passings"] = message_passings;
  j["graph_poolings"] = graph_poolings;
  j["pooling_factor"] = pooling_factor;
  j["embedding_size"] = embedding_size;
  j["feature_space_mode"] = graphbuild::to_string(feature_space_mode);
  j["magnifications"] = magnifications;
  j["seed"] = seed;
  j["max_epochs"] = max_epochs;
  j["early_stop_patience"] = early_stop_patience;
  return j;
}

inline ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "learning_rate", "lr_decay",       "lr_patience",    "beta1",
      "beta2",         "epsilon",        "dropout",        "weight_decay",
      "max_patches",   "message_passings", "graph_poolings", "pooling_factor",
      "embedding_size", "feature_space_mode", "magnifications", "seed",
      "max_epochs",    "early_stop_patience"};
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("config: unknown field '" + key + "'");
  }
  ModelConfig c;
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::remove_reference_t<decltype(out)>>();
  };
  get("learning_rate", c.learning_rate);
  get("lr_decay", c.lr_decay);
  get("lr_patience", c.lr_patience);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("epsilon", c.epsilon);
  get("dropout", c.dropout);
  get("weight_decay", c.weight_decay);
  get("max_patches", c.max_patches);
  get("message_passings", c.message_passings);
  get("graph_poolings", c.graph_poolings);
  get("pooling_factor", c.pooling_factor);
  get("embedding_size", c.embedding_size);
  if (j.contains("feature_space_mode")) {
    c.feature_space_mode = graphbuild::parse_feature_space_mode(j.at("feature_space_mode").get<std::string>());
  }
  get("magnifications", c.magnifications);
  get("seed", c.seed);
  get("max_epochs", c.max_epochs);
  get("early_stop_patience", c.early_stop_patience);
  c.validate();
  return c;
}

inline ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

inline void ModelConfig::save(const std::filesystem::path& path) const {
  csvio::write_text(path, to_json().dump(2) + "\n");
}

}  // namespace patchgraph::pipeline
