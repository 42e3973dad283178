#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace pcnssm {

using Vec3 = Eigen::Vector3d;

// Unordered set of 3D points. `provenance`, when non-empty, holds for each
// point the index of the point it was drawn from in a parent cloud.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::size_t> provenance;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  std::span<const Vec3> view() const { return points; }
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> triangles;

  double triangle_area(std::size_t t) const;
  double surface_area() const;
};

// Throws std::invalid_argument naming the offending triangle when an index
// is out of range.
void validate_indices(const TriangleMesh& mesh);

// Drops triangles whose area is below a tolerance relative to the mesh
// extent. Returns the number removed.
std::size_t remove_degenerate_triangles(TriangleMesh& mesh);

}  // namespace pcnssm
