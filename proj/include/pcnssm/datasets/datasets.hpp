#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pcnssm/alignment/alignment.hpp"
#include "pcnssm/geometry/types.hpp"

namespace pcnssm {

struct ShapeSample {
  std::string id;
  PointCloud ground_truth;
  PointCloud input;  // empty until prepare_input
  std::optional<TriangleMesh> mesh;
  std::optional<std::string> label;
  std::map<std::string, double> params;  // generator parameters, e.g. rx/ry/rz
};

struct Cohort {
  std::vector<ShapeSample> train;
  std::vector<ShapeSample> test;
  std::optional<CohortFrame> frame;
  nlohmann::json provenance = nlohmann::json::object();
};

struct EllipsoidParams {
  std::size_t n_train = 50;
  std::size_t n_test = 30;
  double rz = 1.0;
  std::pair<double, double> rx_range{0.6, 1.4};
  std::pair<double, double> ry_range{0.6, 1.4};
  std::size_t points_per_shape = 5000;
  int mesh_subdivisions = 4;
  std::uint64_t seed = 0;
};

struct TwoGroupParams {
  std::size_t n_per_group = 20;
  std::size_t test_per_group = 5;
  Vec3 bump_center{1.0, 0.0, 0.0};  // direction; normalized on use
  double bump_amplitude = 0.25;
  double bump_width = 0.5;
  // Base ellipsoid population shared by both groups.
  double rz = 1.0;
  std::pair<double, double> rx_range{0.8, 1.2};
  std::pair<double, double> ry_range{0.8, 1.2};
  std::size_t points_per_shape = 5000;
  int mesh_subdivisions = 4;
  std::uint64_t seed = 0;
};

// Uniform-by-area samples on an axis-aligned ellipsoid centered at the origin.
PointCloud sample_ellipsoid(const Vec3& radii, std::size_t n, std::uint64_t seed);
// Icosphere with `subdivisions` levels mapped onto the ellipsoid.
TriangleMesh ellipsoid_mesh(const Vec3& radii, int subdivisions);
// Point on the ellipsoid surface along direction `dir`.
Vec3 ellipsoid_point_along(const Vec3& radii, const Vec3& dir);

Cohort generate_ellipsoids(const EllipsoidParams& params);
// Group "A": plain ellipsoids. Group "B": the same radii, shape for shape,
// plus an outward Gaussian bump around the surface point along `bump_center`.
Cohort generate_two_group(const TwoGroupParams& params);

ShapeSample prepare_input(ShapeSample sample, std::size_t n, std::uint64_t seed);

// Removes the ceil(p*N) points nearest to a randomly chosen member point.
PointCloud make_partial(const PointCloud& input, double missing_fraction, std::uint64_t seed);

// k-medoids (k = round(test_fraction * S)) on the pairwise Chamfer matrix;
// the medoids become the test set.
std::pair<std::vector<ShapeSample>, std::vector<ShapeSample>> stratified_split(
    std::vector<ShapeSample> samples, double test_fraction, std::uint64_t seed,
    std::size_t descriptor_points = 512);

// Lower-level k-medoids over a dense symmetric distance matrix (row-major).
std::vector<std::size_t> k_medoids(const std::vector<double>& distances, std::size_t n,
                                   std::size_t k, std::uint64_t seed);

struct LoadedMesh {
  std::string id;
  TriangleMesh mesh;
};
struct MeshLoadReport {
  std::vector<LoadedMesh> meshes;
  std::vector<std::string> errors;  // one entry per failed file, naming it
};
MeshLoadReport load_mesh_cohort(const std::filesystem::path& directory);

// Mesh vertices become the ground truth; split by stratified_split.
Cohort cohort_from_meshes(std::vector<LoadedMesh> meshes, double test_fraction,
                          std::uint64_t seed);

struct PrepareOptions {
  AlignmentOptions alignment;
  bool align = true;
  std::size_t input_size = 2048;
  std::uint64_t seed = 0;
};

// ICP-aligns every shape to a training reference, fits the cohort scale on
// the training shapes, maps ground truth and meshes into the frame, then
// draws each input cloud.
Cohort prepare_cohort(Cohort raw, const PrepareOptions& options);

// Manifest JSON plus PLY payloads under `directory`.
std::filesystem::path write_cohort(const std::filesystem::path& directory, const Cohort& cohort);
Cohort read_cohort(const std::filesystem::path& manifest);

}  // namespace pcnssm
