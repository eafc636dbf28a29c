#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "patchgraph/numkit/tensor.hpp"

// Primitive tape operations. Every op validates shapes, computes its forward
// value eagerly and, when any input requires gradients, registers a closure
// that accumulates d(out) into its inputs during backward().
namespace patchgraph::numkit {

namespace detail {

inline Tape& same_tape(const char* op, const Var& a, const Var& b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw ValidationError(std::string(op) + ": operands are not on the same tape");
  }
  return *a.tape();
}

inline Tape& own_tape(const char* op, const Var& a) {
  if (!a.valid()) throw ValidationError(std::string(op) + ": operand is not on a tape");
  return *a.tape();
}

inline void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) throw ValidationError(std::string(op) + ": " + msg);
}

// C (MxN) += A (MxK) * B (KxN)
inline void mm_nn(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (MxK) += A (MxN) * B^T where B is (KxN)
inline void mm_nt(double* c, const double* a, const double* b, std::size_t m, std::size_t n,
                  std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C (KxN) += A^T * B where A is (MxK), B is (MxN)
inline void mm_tn(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape("add", a, b);
  detail::require(a.shape() == b.shape(), "add", "shape mismatch");
  const auto& av = tape.node(a.id()).value;
  const auto& bv = tape.node(b.id()).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  bool rg = a.requires_grad() || b.requires_grad();
  Var res = tape.raw_node(a.shape(), std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    Tape::Node* bn = &tape.node(b.id());
    on->backprop = [on, an, bn] {
      if (an->requires_grad) {
        Tape::ensure_grad(*an);
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        Tape::ensure_grad(*bn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      }
    };
  }
  return res;
}

inline Var sub(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape("sub", a, b);
  detail::require(a.shape() == b.shape(), "sub", "shape mismatch");
  const auto& av = tape.node(a.id()).value;
  const auto& bv = tape.node(b.id()).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  bool rg = a.requires_grad() || b.requires_grad();
  Var res = tape.raw_node(a.shape(), std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    Tape::Node* bn = &tape.node(b.id());
    on->backprop = [on, an, bn] {
      if (an->requires_grad) {
        Tape::ensure_grad(*an);
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        Tape::ensure_grad(*bn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    };
  }
  return res;
}

// Elementwise product, same shapes.
inline Var mul(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape("mul", a, b);
  detail::require(a.shape() == b.shape(), "mul", "shape mismatch");
  const auto& av = tape.node(a.id()).value;
  const auto& bv = tape.node(b.id()).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  bool rg = a.requires_grad() || b.requires_grad();
  Var res = tape.raw_node(a.shape(), std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    Tape::Node* bn = &tape.node(b.id());
    on->backprop = [on, an, bn] {
      if (an->requires_grad) {
        Tape::ensure_grad(*an);
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        Tape::ensure_grad(*bn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
      }
    };
  }
  return res;
}

inline Var scale(const Var& a, double c) {
  Tape& tape = detail::own_tape("scale", a);
  const auto& av = tape.node(a.id()).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = c * av[i];
  bool rg = a.requires_grad();
  Var res = tape.raw_node(a.shape(), std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    on->backprop = [on, an, c] {
      Tape::ensure_grad(*an);
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += c * on->grad[i];
    };
  }
  return res;
}

// m (Nxd) + row (d or 1xd), broadcast over rows.
inline Var add_rowvec(const Var& m, const Var& row) {
  Tape& tape = detail::same_tape("add_rowvec", m, row);
  detail::require(m.shape().size() == 2, "add_rowvec", "matrix operand must be rank 2");
  std::size_t n = m.shape()[0], d = m.shape()[1];
  detail::require(row.values().size() == d, "add_rowvec", "row length mismatch");
  const auto& mv = tape.node(m.id()).value;
  const auto& rv = tape.node(row.id()).value;
  std::vector<double> out(mv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = mv[i * d + j] + rv[j];
  bool rg = m.requires_grad() || row.requires_grad();
  Var res = tape.raw_node(m.shape(), std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* mn = &tape.node(m.id());
    Tape::Node* rn = &tape.node(row.id());
    on->backprop = [on, mn, rn, n, d] {
      if (mn->requires_grad) {
        Tape::ensure_grad(*mn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) mn->grad[i] += on->grad[i];
      }
      if (rn->requires_grad) {
        Tape::ensure_grad(*rn);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) rn->grad[j] += on->grad[i * d + j];
      }
    };
  }
  return res;
}

// m (Nxd) * col (N or Nx1), broadcast along each row.
inline Var mul_colvec(const Var& m, const Var& col) {
  Tape& tape = detail::same_tape("mul_colvec", m, col);
  detail::require(m.shape().size() == 2, "mul_colvec", "matrix operand must be rank 2");
  std::size_t n = m.shape()[0], d = m.shape()[1];
  detail::require(col.values().size() == n, "mul_colvec", "column length mismatch");
  const auto& mv = tape.node(m.id()).value;
  const auto& cv = tape.node(col.id()).value;
  std::vector<double> out(mv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = mv[i * d + j] * cv[i];
  bool rg = m.requires_grad() || col.requires_grad();
  Var res = tape.raw_node(m.shape(), std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* mn = &tape.node(m.id());
    Tape::Node* cn = &tape.node(col.id());
    on->backprop = [on, mn, cn, n, d] {
      if (mn->requires_grad) {
        Tape::ensure_grad(*mn);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) mn->grad[i * d + j] += on->grad[i * d + j] * cn->value[i];
      }
      if (cn->requires_grad) {
        Tape::ensure_grad(*cn);
        for (std::size_t i = 0; i < n; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) acc += on->grad[i * d + j] * mn->value[i * d + j];
          cn->grad[i] += acc;
        }
      }
    };
  }
  return res;
}

// a (MxK) * b (KxN). A rank-1 b of length K is treated as Kx1.
inline Var matmul(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape("matmul", a, b);
  detail::require(a.shape().size() == 2, "matmul", "left operand must be rank 2");
  std::size_t m = a.shape()[0], k = a.shape()[1];
  std::size_t n;
  if (b.shape().size() == 2) {
    detail::require(b.shape()[0] == k, "matmul", "inner dimensions disagree");
    n = b.shape()[1];
  } else {
    detail::require(b.shape().size() == 1 && b.shape()[0] == k, "matmul", "inner dimensions disagree");
    n = 1;
  }
  const auto& av = tape.node(a.id()).value;
  const auto& bv = tape.node(b.id()).value;
  std::vector<double> out(m * n, 0.0);
  detail::mm_nn(out.data(), av.data(), bv.data(), m, k, n);
  bool rg = a.requires_grad() || b.requires_grad();
  Var res = tape.raw_node({m, n}, std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    Tape::Node* bn = &tape.node(b.id());
    on->backprop = [on, an, bn, m, k, n] {
      if (an->requires_grad) {
        Tape::ensure_grad(*an);
        detail::mm_nt(an->grad.data(), on->grad.data(), bn->value.data(), m, n, k);
      }
      if (bn->requires_grad) {
        Tape::ensure_grad(*bn);
        detail::mm_tn(bn->grad.data(), an->value.data(), on->grad.data(), m, k, n);
      }
    };
  }
  return res;
}

namespace detail {

template <typename Fwd, typename Deriv>
Var elementwise(const char* name, const Var& a, Fwd fwd, Deriv deriv) {
  Tape& tape = own_tape(name, a);
  const auto& av = tape.node(a.id()).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  bool rg = a.requires_grad();
  Var res = tape.raw_node(a.shape(), std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    on->backprop = [on, an, deriv] {
      Tape::ensure_grad(*an);
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * deriv(an->value[i], on->value[i]);
    };
  }
  return res;
}

}  // namespace detail

// Subgradient 0 at x <= 0.
inline Var relu(const Var& a) {
  return detail::elementwise(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(const Var& a, double slope) {
  return detail::elementwise(
      "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

inline Var tanh(const Var& a) {
  return detail::elementwise(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

// Rows of m (Nxd) at the given indices, in the given order; indices may repeat.
inline Var gather_rows(const Var& m, const std::vector<std::size_t>& idx) {
  Tape& tape = detail::own_tape("gather_rows", m);
  detail::require(m.shape().size() == 2, "gather_rows", "operand must be rank 2");
  std::size_t n = m.shape()[0], d = m.shape()[1];
  for (std::size_t i : idx) detail::require(i < n, "gather_rows", "row index out of range");
  const auto& mv = tape.node(m.id()).value;
  std::vector<double> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(mv.data() + idx[r] * d, d, out.data() + r * d);
  bool rg = m.requires_grad();
  Var res = tape.raw_node({idx.size(), d}, std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* mn = &tape.node(m.id());
    on->backprop = [on, mn, idx, d] {
      Tape::ensure_grad(*mn);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) mn->grad[idx[r] * d + j] += on->grad[r * d + j];
    };
  }
  return res;
}

// Sums rows of m (Mxd) into their segments: out[s] = sum of rows with seg == s.
inline Var segment_sum(const Var& m, const std::vector<std::size_t>& seg, std::size_t n_segments) {
  Tape& tape = detail::own_tape("segment_sum", m);
  detail::require(m.shape().size() == 2, "segment_sum", "operand must be rank 2");
  std::size_t rows = m.shape()[0], d = m.shape()[1];
  detail::require(seg.size() == rows, "segment_sum", "segment id count mismatch");
  for (std::size_t s : seg) detail::require(s < n_segments, "segment_sum", "segment id out of range");
  const auto& mv = tape.node(m.id()).value;
  std::vector<double> out(n_segments * d, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[seg[r] * d + j] += mv[r * d + j];
  bool rg = m.requires_grad();
  Var res = tape.raw_node({n_segments, d}, std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* mn = &tape.node(m.id());
    on->backprop = [on, mn, seg, d] {
      Tape::ensure_grad(*mn);
      for (std::size_t r = 0; r < seg.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) mn->grad[r * d + j] += on->grad[seg[r] * d + j];
    };
  }
  return res;
}

// Softmax of e (M or Mx1) within each segment. Every segment must be
// non-empty: an empty segment means a node with no incident edge.
inline Var segment_softmax(const Var& e, const std::vector<std::size_t>& seg,
                           std::size_t n_segments) {
  Tape& tape = detail::own_tape("segment_softmax", e);
  std::size_t m = e.values().size();
  detail::require(seg.size() == m, "segment_softmax", "segment id count mismatch");
  std::vector<double> seg_max(n_segments, -std::numeric_limits<double>::infinity());
  const auto& ev = tape.node(e.id()).value;
  for (std::size_t r = 0; r < m; ++r) {
    detail::require(seg[r] < n_segments, "segment_softmax", "segment id out of range");
    seg_max[seg[r]] = std::max(seg_max[seg[r]], ev[r]);
  }
  for (std::size_t s = 0; s < n_segments; ++s) {
    if (seg_max[s] == -std::numeric_limits<double>::infinity()) {
      throw ValidationError("segment_softmax: node " + std::to_string(s) +
                            " has no incident edge (missing self-loop)");
    }
  }
  std::vector<double> out(m);
  std::vector<double> denom(n_segments, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    out[r] = std::exp(ev[r] - seg_max[seg[r]]);
    denom[seg[r]] += out[r];
  }
  for (std::size_t r = 0; r < m; ++r) out[r] /= denom[seg[r]];
  bool rg = e.requires_grad();
  Var res = tape.raw_node(e.shape(), std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* en = &tape.node(e.id());
    std::size_t ns = n_segments;
    on->backprop = [on, en, seg, ns] {
      Tape::ensure_grad(*en);
      // d/de_k = alpha_k * (g_k - sum_j alpha_j g_j) within the segment
      std::vector<double> dot(ns, 0.0);
      for (std::size_t r = 0; r < seg.size(); ++r) dot[seg[r]] += on->value[r] * on->grad[r];
      for (std::size_t r = 0; r < seg.size(); ++r)
        en->grad[r] += on->value[r] * (on->grad[r] - dot[seg[r]]);
    };
  }
  return res;
}

// Column means over rows: (Nxd) -> (1xd).
inline Var reduce_mean_rows(const Var& m) {
  Tape& tape = detail::own_tape("reduce_mean_rows", m);
  detail::require(m.shape().size() == 2, "reduce_mean_rows", "operand must be rank 2");
  std::size_t n = m.shape()[0], d = m.shape()[1];
  detail::require(n > 0, "reduce_mean_rows", "empty matrix");
  const auto& mv = tape.node(m.id()).value;
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += mv[i * d + j];
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
  bool rg = m.requires_grad();
  Var res = tape.raw_node({1, d}, std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* mn = &tape.node(m.id());
    on->backprop = [on, mn, n, d] {
      Tape::ensure_grad(*mn);
      double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mn->grad[i * d + j] += on->grad[j] * inv;
    };
  }
  return res;
}

// Column maxima over rows: (Nxd) -> (1xd). The gradient flows to the first
// maximal row (lowest index) on ties.
inline Var reduce_max_rows(const Var& m) {
  Tape& tape = detail::own_tape("reduce_max_rows", m);
  detail::require(m.shape().size() == 2, "reduce_max_rows", "operand must be rank 2");
  std::size_t n = m.shape()[0], d = m.shape()[1];
  detail::require(n > 0, "reduce_max_rows", "empty matrix");
  const auto& mv = tape.node(m.id()).value;
  std::vector<double> out(d);
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t j = 0; j < d; ++j) out[j] = mv[j];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (mv[i * d + j] > out[j]) {
        out[j] = mv[i * d + j];
        argmax[j] = i;
      }
    }
  }
  bool rg = m.requires_grad();
  Var res = tape.raw_node({1, d}, std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* mn = &tape.node(m.id());
    on->backprop = [on, mn, argmax, d] {
      Tape::ensure_grad(*mn);
      for (std::size_t j = 0; j < d; ++j) mn->grad[argmax[j] * d + j] += on->grad[j];
    };
  }
  return res;
}

// Side-by-side concatenation: (Nxda | Nxdb) -> Nx(da+db).
inline Var concat_cols(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape("concat_cols", a, b);
  detail::require(a.shape().size() == 2 && b.shape().size() == 2, "concat_cols",
                  "operands must be rank 2");
  detail::require(a.shape()[0] == b.shape()[0], "concat_cols", "row counts disagree");
  std::size_t n = a.shape()[0], da = a.shape()[1], db = b.shape()[1];
  const auto& av = tape.node(a.id()).value;
  const auto& bv = tape.node(b.id()).value;
  std::vector<double> out(n * (da + db));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * da, da, out.data() + i * (da + db));
    std::copy_n(bv.data() + i * db, db, out.data() + i * (da + db) + da);
  }
  bool rg = a.requires_grad() || b.requires_grad();
  Var res = tape.raw_node({n, da + db}, std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    Tape::Node* bn = &tape.node(b.id());
    on->backprop = [on, an, bn, n, da, db] {
      for (std::size_t i = 0; i < n; ++i) {
        if (an->requires_grad) {
          Tape::ensure_grad(*an);
          for (std::size_t j = 0; j < da; ++j) an->grad[i * da + j] += on->grad[i * (da + db) + j];
        }
        if (bn->requires_grad) {
          Tape::ensure_grad(*bn);
          for (std::size_t j = 0; j < db; ++j)
            bn->grad[i * db + j] += on->grad[i * (da + db) + da + j];
        }
      }
    };
  }
  return res;
}

// Vertical stacking: (Naxd / Nbxd) -> (Na+Nb)xd.
inline Var concat_rows(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape("concat_rows", a, b);
  detail::require(a.shape().size() == 2 && b.shape().size() == 2, "concat_rows",
                  "operands must be rank 2");
  detail::require(a.shape()[1] == b.shape()[1], "concat_rows", "column counts disagree");
  std::size_t na = a.shape()[0], nb = b.shape()[0], d = a.shape()[1];
  const auto& av = tape.node(a.id()).value;
  const auto& bv = tape.node(b.id()).value;
  std::vector<double> out;
  out.reserve((na + nb) * d);
  out.insert(out.end(), av.begin(), av.end());
  out.insert(out.end(), bv.begin(), bv.end());
  bool rg = a.requires_grad() || b.requires_grad();
  Var res = tape.raw_node({na + nb, d}, std::move(out), rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    Tape::Node* bn = &tape.node(b.id());
    on->backprop = [on, an, bn, na, nb, d] {
      if (an->requires_grad) {
        Tape::ensure_grad(*an);
        for (std::size_t i = 0; i < na * d; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        Tape::ensure_grad(*bn);
        for (std::size_t i = 0; i < nb * d; ++i) bn->grad[i] += on->grad[na * d + i];
      }
    };
  }
  return res;
}

inline Var sum_all(const Var& a) {
  Tape& tape = detail::own_tape("sum_all", a);
  const auto& av = tape.node(a.id()).value;
  double total = 0.0;
  for (double v : av) total += v;
  bool rg = a.requires_grad();
  Var res = tape.raw_node({1}, {total}, rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    on->backprop = [on, an] {
      Tape::ensure_grad(*an);
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[0];
    };
  }
  return res;
}

// log(sum(exp(v))) over all elements, max-shifted for stability.
inline Var log_sum_exp(const Var& a) {
  Tape& tape = detail::own_tape("log_sum_exp", a);
  const auto& av = tape.node(a.id()).value;
  detail::require(!av.empty(), "log_sum_exp", "empty operand");
  double mx = *std::max_element(av.begin(), av.end());
  double acc = 0.0;
  for (double v : av) acc += std::exp(v - mx);
  double lse = mx + std::log(acc);
  bool rg = a.requires_grad();
  Var res = tape.raw_node({1}, {lse}, rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    on->backprop = [on, an] {
      Tape::ensure_grad(*an);
      for (std::size_t i = 0; i < an->value.size(); ++i)
        an->grad[i] += on->grad[0] * std::exp(an->value[i] - on->value[0]);
    };
  }
  return res;
}

// Single element at a flat index, as a scalar.
inline Var pick(const Var& a, std::size_t flat_index) {
  Tape& tape = detail::own_tape("pick", a);
  const auto& av = tape.node(a.id()).value;
  detail::require(flat_index < av.size(), "pick", "index out of range");
  bool rg = a.requires_grad();
  Var res = tape.raw_node({1}, {av[flat_index]}, rg);
  if (rg) {
    Tape::Node* on = &tape.node(res.id());
    Tape::Node* an = &tape.node(a.id());
    on->backprop = [on, an, flat_index] {
      Tape::ensure_grad(*an);
      an->grad[flat_index] += on->grad[0];
    };
  }
  return res;
}

// Cross-entropy of one sample from raw logits.
inline Var cross_entropy(const Var& logits, std::size_t label) {
  return sub(log_sum_exp(logits), pick(logits, label));
}

}  // namespace patchgraph::numkit
