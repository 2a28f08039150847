#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/model.hpp"

namespace fedsim::nn {

/// Bias-corrected Adam.
struct AdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 0.001;

  static AdamState fresh(std::size_t dim, double learning_rate = 0.001);
};

/// One update step; increments state.t and returns the new parameters.
ParamVector adam_step(AdamState& state, const ParamVector& params, const ParamVector& grad);

}  // namespace fedsim::nn
