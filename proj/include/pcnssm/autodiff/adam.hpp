#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcnssm/autodiff/tensor.hpp"

namespace pcnssm::ad {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  AdamHyper hyper;

  explicit AdamState(AdamHyper h = {}) : hyper(h) {}
};

// One bias-corrected Adam update using each parameter's accumulated grad.
// Parameters without a gradient are treated as having a zero gradient.
// Moments are lazily sized to the parameters on the first call.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace pcnssm::ad
