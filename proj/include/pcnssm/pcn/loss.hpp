#pragma once

#include <span>

#include "pcnssm/autodiff/tensor.hpp"
#include "pcnssm/geometry/kdtree.hpp"
#include "pcnssm/geometry/types.hpp"

namespace pcnssm::pcn {

struct ChamferTarget {
  std::span<const Vec3> points;
  const KdTree* tree = nullptr;  // built over `points`; optional
};

// Batch mean of chamfer_l1(pred[b], target[b]) for pred of shape [B, P, 3].
// The backward pass reuses the nearest-neighbor matchings found here.
ad::Tensor chamfer_loss(ad::Graph& g, const ad::Tensor& pred,
                        std::span<const ChamferTarget> targets);

struct LossTerms {
  double coarse = 0.0;
  double dense = 0.0;
  double total = 0.0;
};
// chamfer_l1(coarse, gt) + alpha * chamfer_l1(dense, gt)
LossTerms completion_loss(std::span<const Vec3> coarse, std::span<const Vec3> dense,
                          std::span<const Vec3> gt, double alpha);

}  // namespace pcnssm::pcn
