#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "patchgraph/numkit/ops.hpp"
#include "patchgraph/numkit/rng.hpp"
#include "patchgraph/numkit/tensor.hpp"

namespace patchgraph::numkit {

// A scalar-valued function rebuilt on a fresh tape for every evaluation.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_component = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

namespace detail {

inline double eval_at(const ScalarFn& f, const std::vector<Tensor>& point) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Tensor& t : point) {
    Tensor leaf = t;
    leaf.requires_grad = false;
    vars.push_back(tape.insert(leaf));
  }
  return f(tape, vars).scalar();
}

}  // namespace detail

// Compares backward() gradients against central finite differences,
// component-wise. Relative error uses max(1, |analytic|, |numeric|) as the
// scale so near-zero gradients are judged by absolute error. When
// max_components_per_tensor is nonzero, only that many randomly chosen
// components of each input tensor are probed.
inline GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& point, double h,
                                  double tol, std::size_t max_components_per_tensor = 0,
                                  Rng* rng = nullptr) {
  if (!(h > 0.0 && h <= 1e-2)) throw ValidationError("grad_check: h must lie in (0, 1e-2]");

  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : point) {
    Tensor leaf = t;
    leaf.requires_grad = true;
    vars.push_back(tape.insert(leaf));
  }
  Var out = f(tape, vars);
  if (!std::isfinite(out.scalar())) throw ValidationError("grad_check: function value is not finite");
  Gradients grads = backward(out, tape);

  GradCheckReport report;
  std::vector<Tensor> work = point;
  for (std::size_t p = 0; p < point.size(); ++p) {
    const Tensor& analytic = grads.at(vars[p]);
    std::vector<std::size_t> components(point[p].size());
    for (std::size_t i = 0; i < components.size(); ++i) components[i] = i;
    if (max_components_per_tensor > 0 && components.size() > max_components_per_tensor) {
      if (rng == nullptr) throw ValidationError("grad_check: sampling components requires an rng");
      rng->shuffle(components);
      components.resize(max_components_per_tensor);
    }
    for (std::size_t c : components) {
      double saved = work[p].data[c];
      work[p].data[c] = saved + h;
      double fp = detail::eval_at(f, work);
      work[p].data[c] = saved - h;
      double fm = detail::eval_at(f, work);
      work[p].data[c] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw ValidationError("grad_check: non-finite value at parameter " + std::to_string(p) +
                              " component " + std::to_string(c));
      }
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic.data[c];
      if (!std::isfinite(a)) {
        throw ValidationError("grad_check: non-finite gradient at parameter " + std::to_string(p) +
                              " component " + std::to_string(c));
      }
      double scale = std::max({1.0, std::abs(a), std::abs(numeric)});
      double rel = std::abs(a - numeric) / scale;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p;
        report.worst_component = c;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace patchgraph::numkit
