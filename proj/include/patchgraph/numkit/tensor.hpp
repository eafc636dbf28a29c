#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "patchgraph/errors.hpp"

namespace patchgraph::numkit {

// Dense row-major array of 64-bit floats.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in, bool req_grad = false)
      : shape(std::move(shape_in)), data(std::move(data_in)), requires_grad(req_grad) {
    if (element_count(shape) != data.size()) {
      throw ValidationError("Tensor: shape does not match data length");
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  static Tensor zeros(std::vector<std::size_t> shape, bool req_grad = false) {
    std::size_t n = element_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), req_grad);
  }

  static Tensor scalar(double v, bool req_grad = false) { return Tensor({1}, {v}, req_grad); }

  static Tensor vec(std::vector<double> v, bool req_grad = false) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v), req_grad);
  }

  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v, bool req_grad = false) {
    return Tensor({r, c}, std::move(v), req_grad);
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return data.size() == 1; }

  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return rank() < 2 ? (shape.empty() ? 1 : shape[0]) : shape[1]; }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data == b.data;
}

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const std::vector<std::size_t>& shape() const;
  std::span<const double> values() const;
  bool requires_grad() const;
  double scalar() const;
  Tensor to_tensor() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Record of primitive operations in topological (creation) order. Each node
// stores its forward value and a closure that pushes the node's gradient into
// its inputs' gradients. One backward pass visits each record at most once,
// in reverse creation order.
class Tape {
 public:
  struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    bool is_leaf = false;
    std::function<void()> backprop;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Records a leaf holding a copy of the tensor's data.
  Var insert(const Tensor& t) {
    Var v = raw_node(t.shape, t.data, t.requires_grad);
    nodes_[v.id()].is_leaf = true;
    return v;
  }

  Var constant(const Tensor& t) {
    Var v = raw_node(t.shape, t.data, /*requires_grad=*/false);
    nodes_[v.id()].is_leaf = true;
    return v;
  }

  // Low-level node creation used by the op free functions.
  Var raw_node(std::vector<std::size_t> shape, std::vector<double> value, bool requires_grad) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return Var(this, nodes_.size() - 1);
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  static void ensure_grad(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  }

 private:
  std::deque<Node> nodes_;  // deque: stable addresses for backprop closures
};

inline const std::vector<std::size_t>& Var::shape() const { return tape_->node(id_).shape; }
inline std::span<const double> Var::values() const { return tape_->node(id_).value; }
inline bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

inline double Var::scalar() const {
  const auto& n = tape_->node(id_);
  if (n.value.size() != 1) throw ValidationError("Var::scalar: tensor is not a scalar");
  return n.value[0];
}

inline Tensor Var::to_tensor() const {
  const auto& n = tape_->node(id_);
  return Tensor(n.shape, n.value, n.requires_grad);
}

// Gradient of a scalar output with respect to every requires_grad leaf.
class Gradients {
 public:
  const Tensor& at(const Var& param) const {
    auto it = by_id_.find(param.id());
    if (it == by_id_.end()) {
      throw ValidationError("Gradients::at: tensor is not a requires_grad leaf of this tape");
    }
    return it->second;
  }

  bool contains(const Var& param) const { return by_id_.count(param.id()) > 0; }
  std::size_t size() const { return by_id_.size(); }

  void set(std::size_t id, Tensor grad) { by_id_[id] = std::move(grad); }

 private:
  std::unordered_map<std::size_t, Tensor> by_id_;
};

// Reverse-mode differentiation of a scalar output. Parameters the output does
// not depend on get zero gradients.
inline Gradients backward(const Var& output, Tape& tape) {
  if (output.tape() != &tape) throw ValidationError("backward: output is not on this tape");
  Tape::Node& out = tape.node(output.id());
  if (out.value.size() != 1) throw ValidationError("backward: output is not a scalar");

  for (std::size_t i = 0; i < tape.size(); ++i) tape.node(i).grad.clear();
  out.grad.assign(1, 1.0);

  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Tape::Node& n = tape.node(i);
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop();
  }

  Gradients grads;
  for (std::size_t i = 0; i < tape.size(); ++i) {
    Tape::Node& n = tape.node(i);
    if (!n.is_leaf || !n.requires_grad) continue;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    grads.set(i, Tensor(n.shape, n.grad));
  }
  return grads;
}

}  // namespace patchgraph::numkit
