#pragma once

#include <cstdint>
#include <vector>

#include "cfx/params.hpp"
#include "cfx/tensor.hpp"

namespace cfx {

// Adam accumulators for one ParamStore. Moment shapes mirror the parameters;
// the step counter strictly increases on every update.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const ParamStore& params, double learning_rate);
};

// One bias-corrected Adam update, in place. grads is index-aligned with the
// store; an empty tensor means "no gradient this step" (treated as zero).
void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace cfx
