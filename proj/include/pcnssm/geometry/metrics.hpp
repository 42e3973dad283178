#pragma once

#include <memory>
#include <span>
#include <vector>

#include "pcnssm/geometry/kdtree.hpp"
#include "pcnssm/geometry/types.hpp"

namespace pcnssm {

// Nearest target index and distance for every query point.
struct Matching {
  std::vector<std::size_t> index;
  std::vector<double> distance;
};

Matching match_nearest(std::span<const Vec3> queries, const KdTree& target);

// Symmetric L1 Chamfer distance, averaged over both directions:
//   0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|)
double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b);
double chamfer_l1(const PointCloud& a, const PointCloud& b);

// Chamfer value plus the subgradient with respect to `a`, with every
// nearest-neighbor assignment frozen at its current value.
struct ChamferGradient {
  double value = 0.0;
  std::vector<Vec3> grad;
};
ChamferGradient chamfer_l1_grad(std::span<const Vec3> a,
                                std::span<const Vec3> b, const KdTree& b_tree);
ChamferGradient chamfer_l1_grad(std::span<const Vec3> a, std::span<const Vec3> b);

// Mean squared-distance Chamfer, 0.5 * (mean d^2 + mean d^2). Diagnostic only.
double chamfer_l2_squared(std::span<const Vec3> a, std::span<const Vec3> b);

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};
// A point counts as matched when its nearest counterpart lies strictly
// closer than `threshold`.
FScore fscore(std::span<const Vec3> pred, std::span<const Vec3> gt,
              double threshold);

// Exact closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c);

// Unsigned point-to-surface distance queries accelerated by an AABB tree.
class MeshDistance {
 public:
  explicit MeshDistance(const TriangleMesh& mesh);
  ~MeshDistance();
  MeshDistance(MeshDistance&&) noexcept;
  MeshDistance& operator=(MeshDistance&&) noexcept;

  double distance(const Vec3& p) const;
  std::vector<double> distances(std::span<const Vec3> points) const;

 private:
  struct Bvh;
  std::unique_ptr<Bvh> bvh_;
};

std::vector<double> point_to_face(std::span<const Vec3> pred,
                                  const TriangleMesh& mesh);

// Population variance, across points, of each point's mean distance to its k
// nearest other points.
double uniformity(std::span<const Vec3> cloud, std::size_t k = 6);

}  // namespace pcnssm
