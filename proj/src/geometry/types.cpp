#include "pcnssm/geometry/types.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace pcnssm {

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles.at(t);
  const Vec3& a = vertices[tri[0]];
  const Vec3& b = vertices[tri[1]];
  const Vec3& c = vertices[tri[2]];
  return 0.5 * (b - a).cross(c - a).norm();
}

double TriangleMesh::surface_area() const {
  double total = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) total += triangle_area(t);
  return total;
}

void validate_indices(const TriangleMesh& mesh) {
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (std::size_t v : mesh.triangles[t]) {
      if (v >= mesh.vertices.size()) {
        throw std::invalid_argument("triangle " + std::to_string(t) +
                                    " references vertex " + std::to_string(v) +
                                    " of " + std::to_string(mesh.vertices.size()));
      }
    }
  }
}

std::size_t remove_degenerate_triangles(TriangleMesh& mesh) {
  validate_indices(mesh);
  if (mesh.vertices.empty()) return 0;
  Vec3 lo = mesh.vertices.front();
  Vec3 hi = lo;
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double extent = (hi - lo).squaredNorm();
  const double min_area = 1e-14 * extent;
  const std::size_t before = mesh.triangles.size();
  std::vector<std::array<std::size_t, 3>> kept;
  kept.reserve(before);
  for (std::size_t t = 0; t < before; ++t) {
    const auto& tri = mesh.triangles[t];
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
    if (mesh.triangle_area(t) <= min_area) continue;
    kept.push_back(tri);
  }
  mesh.triangles = std::move(kept);
  return before - mesh.triangles.size();
}

}  // namespace pcnssm
