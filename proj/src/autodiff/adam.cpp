#include "pcnssm/autodiff/adam.hpp"

#include <cmath>

#include "pcnssm/error.hpp"

namespace pcnssm::ad {

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: optimizer holds " +
                         std::to_string(state.m.size()) + " moments for " +
                         std::to_string(params.size()) + " parameters");
  }
  ++state.step;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size() || v.size() != p.size()) {
      throw DimensionError("adam_step: moment size mismatch for parameter " +
                           std::to_string(i));
    }
    if (!p.has_grad()) {
      for (std::size_t j = 0; j < m.size(); ++j) {
        m[j] *= h.beta1;
        v[j] *= h.beta2;
      }
    } else {
      auto grad = p.grad();
      for (std::size_t j = 0; j < m.size(); ++j) {
        m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * grad[j];
        v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * grad[j] * grad[j];
      }
    }
    auto values = p.mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

}  // namespace pcnssm::ad
