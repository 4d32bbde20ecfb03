#include "cfx/adam.hpp"

#include <cmath>

#include "cfx/errors.hpp"

namespace cfx {

AdamState AdamState::init(const ParamStore& params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m.reserve(static_cast<size_t>(params.size()));
  s.v.reserve(static_cast<size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    s.m.push_back(Tensor::zeros(params.value(i).shape));
    s.v.push_back(Tensor::zeros(params.value(i).shape));
  }
  return s;
}

void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state) {
  if (static_cast<int>(grads.size()) != params.size() ||
      static_cast<int>(state.m.size()) != params.size()) {
    throw DimError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                   std::to_string(params.size()) + " parameters");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (int i = 0; i < params.size(); ++i) {
    const Tensor& g = grads[static_cast<size_t>(i)];
    if (g.data.empty()) continue;  // parameter untouched this step
    Tensor& w = params.value(i);
    check_same_shape(w, g, "adam_step");
    Tensor& m = state.m[static_cast<size_t>(i)];
    Tensor& v = state.v[static_cast<size_t>(i)];
    for (size_t j = 0; j < w.data.size(); ++j) {
      m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * g.data[j];
      v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * g.data[j] * g.data[j];
      const double mhat = m.data[j] / bc1;
      const double vhat = v.data[j] / bc2;
      w.data[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace cfx
