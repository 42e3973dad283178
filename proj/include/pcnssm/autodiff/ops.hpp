#pragma once

#include <vector>

#include "pcnssm/autodiff/tensor.hpp"

namespace pcnssm::ad {

// x[..., Din] · W[Din, Dout] + b[Dout]. `b` may be undefined for no bias.
Tensor linear(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(Graph& g, const Tensor& x);

// Per-channel maximum over the set axis: [B, N, D] -> [B, D] or [N, D] -> [D].
// The lowest index wins ties and receives the whole gradient.
Tensor max_over_set(Graph& g, const Tensor& x);

// [B, D] -> [B, n, D] by repeating each row n times.
Tensor tile(Graph& g, const Tensor& x, std::size_t n);

Tensor concat(Graph& g, const std::vector<Tensor>& xs, std::size_t axis);
Tensor reshape(Graph& g, const Tensor& x, Shape shape);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);
Tensor sum(Graph& g, const Tensor& x);

}  // namespace pcnssm::ad
