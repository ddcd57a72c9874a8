#pragma once

#include <cstdint>

#include "gridlight/tensor.h"

namespace gridlight::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ParamSet m;
  ParamSet v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of every entry in `params`.
// Throws if a parameter has no gradient or a gradient has the wrong shape.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr);

}  // namespace gridlight::ad
