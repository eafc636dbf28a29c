#pragma once

#include <cmath>

#include "patchgraph/numkit/tensor.hpp"

namespace patchgraph::numkit {

// Per-parameter Adam state. Weight decay is decoupled: applied directly to the
// parameter before the moment update, not through the gradient.
struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
};

inline AdamState make_adam_state(const Tensor& param, double learning_rate, double beta1 = 0.9,
                                 double beta2 = 0.999, double epsilon = 1e-8,
                                 double weight_decay = 0.0) {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ValidationError("make_adam_state: betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("make_adam_state: epsilon must be positive");
  AdamState s;
  s.first_moment = Tensor::zeros(param.shape);
  s.second_moment = Tensor::zeros(param.shape);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  return s;
}

// Bias-corrected Adam update, in place.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  if (!param.same_shape(grad) || !param.same_shape(state.first_moment)) {
    throw ValidationError("adam_step: parameter, gradient and moment shapes disagree");
  }
  state.step_count += 1;
  double t = static_cast<double>(state.step_count);
  double bc1 = 1.0 - std::pow(state.beta1, t);
  double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    if (state.weight_decay != 0.0) {
      param.data[i] -= state.learning_rate * state.weight_decay * param.data[i];
    }
    double g = grad.data[i];
    double& m = state.first_moment.data[i];
    double& v = state.second_moment.data[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    double m_hat = m / bc1;
    double v_hat = v / bc2;
    param.data[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace patchgraph::numkit
