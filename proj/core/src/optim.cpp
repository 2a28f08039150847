#include "fedsim/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsim::nn {

AdamState AdamState::fresh(std::size_t dim, double learning_rate) {
  AdamState s;
  s.m.assign(dim, 0.0);
  s.v.assign(dim, 0.0);
  s.learning_rate = learning_rate;
  return s;
}

ParamVector adam_step(AdamState& state, const ParamVector& params, const ParamVector& grad) {
  require_combinable(params, grad, "adam_step");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: state dimension does not match parameters");
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  ParamVector out = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad.values[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    out.values[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  return out;
}

}  // namespace fedsim::nn
