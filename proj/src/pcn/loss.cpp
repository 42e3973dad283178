#include "pcnssm/pcn/loss.hpp"

#include <optional>

#include "pcnssm/error.hpp"
#include "pcnssm/geometry/metrics.hpp"

namespace pcnssm::pcn {

ad::Tensor chamfer_loss(ad::Graph& g, const ad::Tensor& pred,
                        std::span<const ChamferTarget> targets) {
  if (pred.rank() != 3 || pred.dim(2) != 3) {
    throw DimensionError("chamfer_loss: expected [B,P,3], got " + ad::to_string(pred.shape()));
  }
  const std::size_t batch = pred.dim(0);
  const std::size_t n = pred.dim(1);
  if (targets.size() != batch) {
    throw DimensionError("chamfer_loss: " + std::to_string(targets.size()) + " targets for batch " +
                         std::to_string(batch));
  }
  const bool tracked = g.tracks({&pred});
  auto values = pred.values();
  std::vector<Vec3> grads;
  if (tracked) grads.reserve(batch * n);
  double total = 0.0;
  std::vector<Vec3> points(n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      points[i] = Vec3(values[(b * n + i) * 3], values[(b * n + i) * 3 + 1],
                       values[(b * n + i) * 3 + 2]);
    }
    const ChamferTarget& t = targets[b];
    std::optional<KdTree> own;
    if (t.tree == nullptr) own.emplace(t.points);
    const KdTree& tree = t.tree ? *t.tree : *own;
    if (tracked) {
      ChamferGradient cg = chamfer_l1_grad(points, t.points, tree);
      total += cg.value;
      grads.insert(grads.end(), cg.grad.begin(), cg.grad.end());
    } else {
      total += chamfer_l1(points, t.points);
    }
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  ad::Tensor out = ad::Tensor::scalar(total * inv_batch, tracked);
  if (tracked) {
    g.record("chamfer_loss", {pred}, out,
             [pred, out, grads = std::move(grads), inv_batch]() {
               const double upstream = out.grad()[0] * inv_batch;
               auto dx = pred.grad_buffer();
               for (std::size_t i = 0; i < grads.size(); ++i) {
                 for (int k = 0; k < 3; ++k) dx[i * 3 + k] += upstream * grads[i][k];
               }
             });
  }
  return out;
}

LossTerms completion_loss(std::span<const Vec3> coarse, std::span<const Vec3> dense,
                          std::span<const Vec3> gt, double alpha) {
  if (!(alpha >= 0.0)) throw ContractError("completion_loss: alpha must be >= 0");
  LossTerms t;
  t.coarse = chamfer_l1(coarse, gt);
  t.dense = chamfer_l1(dense, gt);
  t.total = t.coarse + alpha * t.dense;
  return t;
}

}  // namespace pcnssm::pcn
