#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "pcnssm/datasets/datasets.hpp"
#include "pcnssm/error.hpp"
#include "pcnssm/geometry/io.hpp"
#include "pcnssm/geometry/metrics.hpp"
#include "pcnssm/random.hpp"

using namespace pcnssm;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pcnssm_datasets_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

double membership(const Vec3& p, const Vec3& r) {
  return std::abs(p.cwiseQuotient(r).squaredNorm() - 1.0);
}

EllipsoidParams small_ellipsoids() {
  EllipsoidParams p;
  p.n_train = 6;
  p.n_test = 4;
  p.points_per_shape = 2500;
  p.mesh_subdivisions = 2;
  p.seed = 11;
  return p;
}

bool same_points(const PointCloud& a, const PointCloud& b) {
  return a.points == b.points;
}

}  // namespace

TEST_CASE("sphere samples lie on the sphere") {
  const auto cloud = sample_ellipsoid(Vec3(0.7, 0.7, 0.7), 4000, 3);
  CHECK(cloud.size() == 4000);
  for (const Vec3& p : cloud.points) CHECK(std::abs(p.norm() - 0.7) <= 1e-9);
}

TEST_CASE("ellipsoid samples satisfy the implicit equation") {
  const Vec3 r(1.4, 0.6, 1.0);
  const auto cloud = sample_ellipsoid(r, 5000, 9);
  double worst = 0.0;
  for (const Vec3& p : cloud.points) worst = std::max(worst, membership(p, r));
  CHECK(worst <= 1e-9);
  const auto mesh = ellipsoid_mesh(r, 3);
  for (const Vec3& v : mesh.vertices) CHECK(membership(v, r) <= 1e-9);
  CHECK(mesh.triangles.size() == 20u * 64u);
  CHECK(membership(ellipsoid_point_along(r, Vec3(1, 2, -0.5)), r) <= 1e-12);
}

TEST_CASE("ellipsoid sampling is uniform by area") {
  // Oracle: area fraction of the band |z| > 0.5 measured on a fine mesh.
  const Vec3 r(1.4, 0.6, 1.0);
  const auto mesh = ellipsoid_mesh(r, 6);
  double band = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double z = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]).z() / 3;
    if (std::abs(z) > 0.5) band += mesh.triangle_area(t);
  }
  const double expected = band / mesh.surface_area();
  const std::size_t n = 40000;
  const auto cloud = sample_ellipsoid(r, n, 21);
  const double observed =
      static_cast<double>(std::count_if(cloud.points.begin(), cloud.points.end(),
                                        [](const Vec3& p) { return std::abs(p.z()) > 0.5; })) /
      static_cast<double>(n);
  const double sigma = std::sqrt(expected * (1 - expected) / static_cast<double>(n));
  CHECK(std::abs(observed - expected) < 4 * sigma + 2e-3);
  // Naive direction mapping would be visibly off here.
  CHECK(std::abs(expected - 0.5) > 0.02);
}

TEST_CASE("default ellipsoid cohort sizes and determinism") {
  EllipsoidParams p;
  p.points_per_shape = 200;
  p.mesh_subdivisions = 1;
  const auto cohort = generate_ellipsoids(p);
  CHECK(cohort.train.size() == 50);
  CHECK(cohort.test.size() == 30);
  std::set<std::string> ids;
  for (const auto& s : cohort.train) ids.insert(s.id);
  for (const auto& s : cohort.test) ids.insert(s.id);
  CHECK(ids.size() == 80);
  for (const auto& s : cohort.train) {
    CHECK(s.params.at("rz") == 1.0);
    CHECK(s.params.at("rx") >= 0.6);
    CHECK(s.params.at("rx") <= 1.4);
    CHECK(s.params.at("ry") >= 0.6);
    CHECK(s.params.at("ry") <= 1.4);
    CHECK(s.mesh.has_value());
  }
  const auto again = generate_ellipsoids(p);
  for (std::size_t i = 0; i < 50; ++i) CHECK(same_points(cohort.train[i].ground_truth, again.train[i].ground_truth));
  p.seed = 1;
  const auto other = generate_ellipsoids(p);
  CHECK_FALSE(same_points(cohort.train[0].ground_truth, other.train[0].ground_truth));
  p.rx_range = {-1.0, 1.0};
  CHECK_THROWS_AS(generate_ellipsoids(p), ContractError);
}

TEST_CASE("two-group bump is outward and bounded") {
  TwoGroupParams p;
  p.n_per_group = 4;
  p.test_per_group = 1;
  p.points_per_shape = 2000;
  p.mesh_subdivisions = 2;
  p.seed = 5;
  const auto cohort = generate_two_group(p);
  std::size_t a = 0, b = 0;
  for (const auto& s : cohort.train) (s.label.value() == "A" ? a : b)++;
  CHECK(a == 4);
  CHECK(b == 4);
  CHECK(cohort.test.size() == 2);
  // Shapes come in A/B pairs with shared radii.
  for (std::size_t i = 0; i + 1 < cohort.train.size(); i += 2) {
    CHECK(cohort.train[i].id.substr(2) == cohort.train[i + 1].id.substr(2));
    CHECK(cohort.train[i].params.at("rx") == cohort.train[i + 1].params.at("rx"));
    CHECK(cohort.train[i].params.at("ry") == cohort.train[i + 1].params.at("ry"));
  }
  double max_displacement = 0.0;
  for (const auto& s : cohort.train) {
    const Vec3 r(s.params.at("rx"), s.params.at("ry"), s.params.at("rz"));
    for (const Vec3& q : s.ground_truth.points) {
      // Level-set value grows monotonically outward along the normal.
      const double level = q.cwiseQuotient(r).squaredNorm();
      if (*s.label == "A") {
        CHECK(std::abs(level - 1.0) <= 1e-9);
      } else {
        CHECK(level >= 1.0 - 1e-9);
        // Distance to the base ellipsoid is below the displacement, which is
        // bounded by the amplitude.
        const Vec3 foot = ellipsoid_point_along(r, q);
        max_displacement = std::max(max_displacement, (q - foot).norm());
      }
    }
  }
  CHECK(max_displacement > 0.5 * p.bump_amplitude);
  CHECK(max_displacement <= p.bump_amplitude + 1e-12);

  p.bump_amplitude = 0.0;
  const auto flat = generate_two_group(p);
  for (const auto& s : flat.train) {
    const Vec3 r(s.params.at("rx"), s.params.at("ry"), s.params.at("rz"));
    for (const Vec3& q : s.ground_truth.points) CHECK(membership(q, r) <= 1e-9);
  }
  p.bump_amplitude = -0.1;
  CHECK_THROWS_AS(generate_two_group(p), ContractError);
}

TEST_CASE("prepare_input draws a permuted subset") {
  ShapeSample s;
  s.id = "x";
  s.ground_truth = sample_ellipsoid(Vec3(1, 0.8, 1.2), 2048, 1);
  const auto exact = prepare_input(s, 2048, 4);
  CHECK(exact.input.size() == 2048);
  auto sorted = exact.input.provenance;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 2048; ++i) CHECK(sorted[i] == i);
  CHECK_FALSE(std::is_sorted(exact.input.provenance.begin(), exact.input.provenance.end()));
  for (std::size_t i = 0; i < 2048; ++i) {
    CHECK(exact.input.points[i] == s.ground_truth.points[exact.input.provenance[i]]);
  }

  s.ground_truth = sample_ellipsoid(Vec3(1, 0.8, 1.2), 5000, 1);
  const auto sub = prepare_input(s, 2048, 4);
  CHECK(std::set<std::size_t>(sub.input.provenance.begin(), sub.input.provenance.end()).size() == 2048);
  const KdTree gt_tree(s.ground_truth.points);
  for (const Vec3& p : sub.input.points) CHECK(gt_tree.nearest(p).distance == 0.0);
  const double cd = chamfer_l1(sub.input, s.ground_truth);
  CHECK(cd >= 0.0);
  CHECK(cd < 0.05);

  const auto other = prepare_input(s, 2048, 5);
  CHECK(other.input.provenance != sub.input.provenance);
  CHECK(prepare_input(s, 2048, 4).input.provenance == sub.input.provenance);
  CHECK_THROWS_AS(prepare_input(s, 6000, 4), ContractError);
}

TEST_CASE("make_partial removes a contiguous region") {
  ShapeSample s;
  s.ground_truth = sample_ellipsoid(Vec3(1, 1, 1), 3000, 2);
  const PointCloud input = prepare_input(s, 2048, 3).input;
  CHECK(make_partial(input, 0.0, 1).points == input.points);
  const PointCloud half = make_partial(input, 0.5, 7);
  CHECK(half.size() == 1024);
  CHECK(make_partial(input, 0.3, 7).size() == 2048 - 615);

  // Identify the seed point: for each candidate seed, the removed set must
  // be exactly its 1024 nearest points.
  std::set<std::size_t> kept(half.provenance.begin(), half.provenance.end());
  std::vector<std::size_t> removed;
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!kept.count(input.provenance[i])) removed.push_back(i);
  }
  REQUIRE(removed.size() == 1024);
  bool found = false;
  for (std::size_t seed_idx : removed) {
    const Vec3 c = input.points[seed_idx];
    double max_removed = 0.0, min_kept = 1e300;
    for (std::size_t i = 0; i < input.size(); ++i) {
      const double d = (input.points[i] - c).norm();
      if (kept.count(input.provenance[i])) min_kept = std::min(min_kept, d);
      else max_removed = std::max(max_removed, d);
    }
    if (max_removed <= min_kept) {
      found = true;
      break;
    }
  }
  CHECK(found);
  // Retained points keep their coordinates.
  for (std::size_t i = 0; i < half.size(); ++i) {
    CHECK(half.points[i] == s.ground_truth.points[half.provenance[i]]);
  }
  CHECK_THROWS_AS(make_partial(input, 1.0, 1), ContractError);
  CHECK_THROWS_AS(make_partial(input, -0.1, 1), ContractError);
}

TEST_CASE("stratified split counts and cluster coverage") {
  std::vector<ShapeSample> samples;
  for (std::size_t i = 0; i < 80; ++i) {
    ShapeSample s;
    s.id = "s" + std::to_string(i);
    Rng rng(i);
    const double r = rng.uniform(0.8, 1.2);
    s.ground_truth = sample_ellipsoid(Vec3(r, 1.0, 1.0), 128, i);
    samples.push_back(std::move(s));
  }
  const auto [train, test] = stratified_split(samples, 0.1, 3, 64);
  CHECK(train.size() == 72);
  CHECK(test.size() == 8);
  std::set<std::string> ids;
  for (const auto& s : train) ids.insert(s.id);
  for (const auto& s : test) CHECK(ids.insert(s.id).second);
  const auto again = stratified_split(samples, 0.1, 3, 64);
  for (std::size_t i = 0; i < 8; ++i) CHECK(again.second[i].id == test[i].id);

  // Two far-apart clusters of 6 shapes each.
  std::vector<ShapeSample> clustered;
  for (std::size_t i = 0; i < 12; ++i) {
    ShapeSample s;
    s.id = (i < 6 ? "near" : "far") + std::to_string(i);
    s.ground_truth = sample_ellipsoid(Vec3(1.0 + 0.01 * i, 1, 1), 128, i);
    if (i >= 6) {
      for (Vec3& p : s.ground_truth.points) p += Vec3(50, 0, 0);
    }
    clustered.push_back(std::move(s));
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto split = stratified_split(clustered, 2.0 / 12.0, seed);
    REQUIRE(split.second.size() == 2);
    const bool a = split.second[0].id.starts_with("near");
    const bool b = split.second[1].id.starts_with("near");
    CHECK(a != b);
  }
  samples.resize(9);
  CHECK_THROWS_AS(stratified_split(samples, 0.1, 0), ContractError);
}

TEST_CASE("mesh directory loading") {
  const auto dir = scratch("load");
  TriangleMesh cube;
  cube.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                   {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  cube.triangles = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                    {2, 3, 7}, {2, 7, 6}, {1, 2, 6}, {1, 6, 5}, {0, 4, 7}, {0, 7, 3}};
  io::write_obj(dir / "cube.obj", cube);
  const TriangleMesh ell = ellipsoid_mesh(Vec3(1.1, 0.9, 1.0 / 3.0), 2);
  io::write_ply(dir / "ell.ply", ell);
  { std::ofstream(dir / "broken.ply") << "ply\nformat ascii 1.0\nelement vertex 3\n"; }
  { std::ofstream(dir / "notes.txt") << "ignored"; }

  const auto report = load_mesh_cohort(dir);
  REQUIRE(report.meshes.size() == 2);
  CHECK(report.errors.size() == 1);
  CHECK(report.errors[0].find("broken.ply") != std::string::npos);
  CHECK(report.meshes[0].id == "cube");
  CHECK(report.meshes[0].mesh.vertices.size() == 8);
  CHECK(report.meshes[0].mesh.triangles.size() == 12);
  CHECK(report.meshes[1].mesh.vertices == ell.vertices);

  const auto d = point_to_face(report.meshes[0].mesh.vertices, report.meshes[0].mesh);
  for (double v : d) CHECK(v <= 1e-12);

  io::write_ply(dir / "resaved.ply", report.meshes[1].mesh);
  CHECK(io::read_mesh(dir / "resaved.ply").vertices == ell.vertices);
}

TEST_CASE("prepared cohort roundtrips through a manifest") {
  Cohort raw = generate_ellipsoids(small_ellipsoids());
  // Move a test shape out of the reference frame so alignment matters.
  RigidTransform motion;
  motion.rotation = Eigen::AngleAxisd(0.3, Vec3(0, 0, 1)).toRotationMatrix();
  motion.translation = Vec3(0.2, -0.1, 0.05);
  for (Vec3& p : raw.test[0].ground_truth.points) p = motion.apply(p);
  for (Vec3& p : raw.test[0].mesh->vertices) p = motion.apply(p);

  PrepareOptions options;
  options.seed = 8;
  const Cohort cohort = prepare_cohort(raw, options);
  REQUIRE(cohort.frame.has_value());
  CHECK(cohort.frame->ids.size() == 10);
  double max_coord = 0.0;
  for (const auto& s : cohort.train) {
    CHECK(s.input.size() == 2048);
    for (const Vec3& p : s.ground_truth.points) max_coord = std::max(max_coord, p.cwiseAbs().maxCoeff());
  }
  CHECK(max_coord == doctest::Approx(1.0).epsilon(1e-12));
  // Moved test shape is brought back near its unmoved counterpart frame.
  const auto& t0 = cohort.frame->transform_for(raw.test[0].id);
  CHECK(t0.angle() > 0.2);

  const auto dir = scratch("manifest");
  const auto manifest = write_cohort(dir, cohort);
  const Cohort back = read_cohort(manifest);
  REQUIRE(back.train.size() == cohort.train.size());
  REQUIRE(back.test.size() == cohort.test.size());
  for (std::size_t i = 0; i < back.train.size(); ++i) {
    CHECK(back.train[i].id == cohort.train[i].id);
    CHECK(back.train[i].ground_truth.points == cohort.train[i].ground_truth.points);
    CHECK(back.train[i].input.points == cohort.train[i].input.points);
    CHECK(back.train[i].input.provenance == cohort.train[i].input.provenance);
    CHECK(back.train[i].mesh->vertices == cohort.train[i].mesh->vertices);
    CHECK(back.train[i].params == cohort.train[i].params);
  }
  REQUIRE(back.frame.has_value());
  CHECK(back.frame->scale == cohort.frame->scale);
  CHECK(back.provenance == cohort.provenance);

  const Cohort again = prepare_cohort(raw, options);
  for (std::size_t i = 0; i < again.test.size(); ++i) {
    CHECK(again.test[i].input.points == cohort.test[i].input.points);
  }
  CHECK_THROWS_AS(read_cohort(dir / "missing.json"), IoError);
}
