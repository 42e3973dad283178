#pragma once

#include <cstdint>

#include "pcnssm/geometry/types.hpp"

namespace pcnssm {

// Area-weighted triangle choice followed by uniform barycentric sampling.
// provenance[i] is the triangle each point was drawn from.
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n,
                          std::uint64_t seed);

}  // namespace pcnssm
