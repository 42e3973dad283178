#include "pcnssm/geometry/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "pcnssm/error.hpp"
#include "pcnssm/random.hpp"

namespace pcnssm {

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n,
                          std::uint64_t seed) {
  if (n == 0) throw ContractError("sample_surface: n must be at least 1");
  validate_indices(mesh);
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(t);
    cumulative[t] = total;
  }
  if (!(total > 0.0)) throw DegeneracyError("sample_surface: mesh has zero area");

  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.provenance.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double target = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const auto t = static_cast<std::size_t>(it - cumulative.begin());
    const auto& tri = mesh.triangles[t];
    const double s = std::sqrt(rng.uniform());
    const double r = rng.uniform();
    const Vec3 p = (1.0 - s) * mesh.vertices[tri[0]] +
                   s * (1.0 - r) * mesh.vertices[tri[1]] +
                   s * r * mesh.vertices[tri[2]];
    cloud.points.push_back(p);
    cloud.provenance.push_back(t);
  }
  return cloud;
}

}  // namespace pcnssm
