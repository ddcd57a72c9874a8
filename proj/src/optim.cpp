#include "gridlight/optim.h"

#include <cmath>
#include <stdexcept>

namespace gridlight::ad {

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr) {
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("adam_step: no gradient for '" + name + "'");
    if (it->second.shape() != p.shape()) {
      throw std::invalid_argument("adam_step: gradient shape " + shape_str(it->second.shape()) + " for '" + name + "' " +
                                  shape_str(p.shape()));
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    auto [mit, m_new] = state.m.try_emplace(name, p.shape());
    auto [vit, v_new] = state.v.try_emplace(name, p.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != p.shape() || v.shape() != p.shape()) throw std::logic_error("adam_step: moment shape drift for '" + name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

}  // namespace gridlight::ad
