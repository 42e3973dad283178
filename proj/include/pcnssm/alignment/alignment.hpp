#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcnssm/geometry/kdtree.hpp"
#include "pcnssm/geometry/types.hpp"

namespace pcnssm {

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  // Rotation angle of R in radians.
  double angle() const;
};

// Least-squares rigid motion taking `source[i]` onto `target[i]`
// (SVD orthogonal Procrustes with reflection correction).
RigidTransform fit_rigid(std::span<const Vec3> source, std::span<const Vec3> target);

struct IcpOptions {
  int max_iter = 100;
  double tol = 1e-6;
};

struct IcpResult {
  RigidTransform transform;
  double rms = 0.0;
  int iterations = 0;
  std::vector<double> rms_history;  // RMS of the correspondences used at each step
};

// Rigid ICP of `source` onto `reference`. Starts from the better of the
// identity and the centroid-matching translation.
IcpResult icp_rigid(std::span<const Vec3> source, std::span<const Vec3> reference,
                    const IcpOptions& options = {});
IcpResult icp_rigid(std::span<const Vec3> source, const KdTree& reference,
                    const IcpOptions& options = {});

// Shared frame for a cohort: every shape maps via p -> scale * (R p + t).
struct CohortFrame {
  std::string reference_id;
  std::vector<std::string> ids;
  std::vector<RigidTransform> transforms;
  double scale = 1.0;

  const RigidTransform& transform_for(const std::string& id) const;
};

struct AlignmentOptions {
  IcpOptions icp;
  // Index into the training set; the Chamfer medoid when unset.
  std::optional<std::size_t> reference;
  // Points per shape used when ranking medoid candidates.
  std::size_t medoid_points = 1024;
};

// Index of the shape minimizing the summed Chamfer-L1 distance to all others.
std::size_t chamfer_medoid(std::span<const PointCloud> clouds, std::size_t max_points);

struct AlignedCohort {
  CohortFrame frame;  // scale left at 1; see fit_scale
  std::vector<PointCloud> clouds;
};

AlignedCohort align_cohort(std::span<const PointCloud> clouds,
                           std::span<const std::string> ids,
                           const AlignmentOptions& options = {});

// 1 / max |coordinate| over every point of every cloud.
double fit_scale(std::span<const PointCloud> aligned);

PointCloud apply_frame(const PointCloud& cloud, const RigidTransform& t, double scale);
PointCloud invert_frame(const PointCloud& cloud, const RigidTransform& t, double scale);
TriangleMesh apply_frame(const TriangleMesh& mesh, const RigidTransform& t, double scale);

nlohmann::json to_json(const CohortFrame& frame);
CohortFrame frame_from_json(const nlohmann::json& j);

}  // namespace pcnssm
