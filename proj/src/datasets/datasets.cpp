#include "pcnssm/datasets/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pcnssm/error.hpp"
#include "pcnssm/geometry/io.hpp"
#include "pcnssm/geometry/metrics.hpp"
#include "pcnssm/random.hpp"

namespace pcnssm {

namespace {

Vec3 random_direction(Rng& rng) {
  for (;;) {
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

TriangleMesh icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
                 {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                 {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
                 {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoints;
    auto midpoint = [&](std::size_t a, std::size_t b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const std::size_t id = m.vertices.size() - 1;
      midpoints.emplace(key, id);
      return id;
    };
    std::vector<std::array<std::size_t, 3>> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& tri : m.triangles) {
      const std::size_t ab = midpoint(tri[0], tri[1]);
      const std::size_t bc = midpoint(tri[1], tri[2]);
      const std::size_t ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  return m;
}

Vec3 ellipsoid_normal(const Vec3& radii, const Vec3& p) {
  return p.cwiseQuotient(radii.cwiseProduct(radii)).normalized();
}

std::string numbered(const std::string& prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return prefix + digits;
}

nlohmann::json ellipsoid_json(const EllipsoidParams& p) {
  return {{"generator", "ellipsoids"},
          {"n_train", p.n_train},
          {"n_test", p.n_test},
          {"rz", p.rz},
          {"rx_range", {p.rx_range.first, p.rx_range.second}},
          {"ry_range", {p.ry_range.first, p.ry_range.second}},
          {"points_per_shape", p.points_per_shape},
          {"mesh_subdivisions", p.mesh_subdivisions},
          {"seed", p.seed}};
}

ShapeSample make_ellipsoid_sample(std::string id, const Vec3& radii, std::size_t points,
                                  int subdivisions, std::uint64_t seed) {
  ShapeSample s;
  s.id = std::move(id);
  s.ground_truth = sample_ellipsoid(radii, points, seed);
  s.mesh = ellipsoid_mesh(radii, subdivisions);
  s.params = {{"rx", radii.x()}, {"ry", radii.y()}, {"rz", radii.z()}};
  return s;
}

}  // namespace

PointCloud sample_ellipsoid(const Vec3& radii, std::size_t n, std::uint64_t seed) {
  if ((radii.array() <= 0.0).any()) throw ContractError("sample_ellipsoid: radii must be positive");
  Rng rng(seed);
  const Vec3 inv = radii.cwiseInverse();
  const double max_factor = inv.maxCoeff();
  PointCloud cloud;
  cloud.points.reserve(n);
  while (cloud.size() < n) {
    const Vec3 u = random_direction(rng);
    // The sphere-to-ellipsoid map stretches area by |diag(1/r) u| (up to the
    // constant rx*ry*rz); accept in proportion to it.
    const double factor = u.cwiseProduct(inv).norm();
    if (rng.uniform() * max_factor <= factor) cloud.points.push_back(u.cwiseProduct(radii));
  }
  return cloud;
}

TriangleMesh ellipsoid_mesh(const Vec3& radii, int subdivisions) {
  TriangleMesh m = icosphere(subdivisions);
  for (auto& v : m.vertices) v = v.cwiseProduct(radii);
  return m;
}

Vec3 ellipsoid_point_along(const Vec3& radii, const Vec3& dir) {
  const Vec3 d = dir.normalized();
  return d / d.cwiseQuotient(radii).norm();
}

Cohort generate_ellipsoids(const EllipsoidParams& params) {
  if (params.rz <= 0 || params.rx_range.first <= 0 || params.ry_range.first <= 0 ||
      params.rx_range.second < params.rx_range.first ||
      params.ry_range.second < params.ry_range.first) {
    throw ContractError("generate_ellipsoids: radii ranges must be positive and ordered");
  }
  Cohort cohort;
  const std::size_t total = params.n_train + params.n_test;
  for (std::size_t i = 0; i < total; ++i) {
    Rng rng(derive_seed(params.seed, i));
    const Vec3 radii(rng.uniform(params.rx_range.first, params.rx_range.second),
                     rng.uniform(params.ry_range.first, params.ry_range.second), params.rz);
    ShapeSample s = make_ellipsoid_sample(numbered("ellipsoid_", i), radii,
                                          params.points_per_shape, params.mesh_subdivisions,
                                          rng.next());
    (i < params.n_train ? cohort.train : cohort.test).push_back(std::move(s));
  }
  cohort.provenance = ellipsoid_json(params);
  return cohort;
}

Cohort generate_two_group(const TwoGroupParams& params) {
  if (params.bump_amplitude < 0.0) throw ContractError("generate_two_group: amplitude must be >= 0");
  if (!(params.bump_width > 0.0)) throw ContractError("generate_two_group: width must be > 0");
  Cohort cohort;
  const std::size_t per_group = params.n_per_group + params.test_per_group;
  const Vec3 direction = params.bump_center.normalized();
  for (std::size_t i = 0; i < per_group; ++i) {
    Rng rng(derive_seed(params.seed, i));
    const Vec3 radii(rng.uniform(params.rx_range.first, params.rx_range.second),
                     rng.uniform(params.ry_range.first, params.ry_range.second), params.rz);
    for (int group = 0; group < 2; ++group) {
      const std::string label = group == 0 ? "A" : "B";
      ShapeSample s = make_ellipsoid_sample(numbered(label + "_", i), radii,
                                            params.points_per_shape, params.mesh_subdivisions,
                                            rng.next());
      s.label = label;
      if (group == 1) {
        const Vec3 center = ellipsoid_point_along(radii, direction);
        const double two_w2 = 2.0 * params.bump_width * params.bump_width;
        auto bump = [&](Vec3& p) {
          const double falloff = std::exp(-(p - center).squaredNorm() / two_w2);
          p += params.bump_amplitude * falloff * ellipsoid_normal(radii, p);
        };
        for (Vec3& p : s.ground_truth.points) bump(p);
        for (Vec3& p : s.mesh->vertices) bump(p);
      }
      s.params["group"] = group;
      (i < params.n_per_group ? cohort.train : cohort.test).push_back(std::move(s));
    }
  }
  cohort.provenance = {{"generator", "two_group"},
                       {"n_per_group", params.n_per_group},
                       {"test_per_group", params.test_per_group},
                       {"bump_center", {direction.x(), direction.y(), direction.z()}},
                       {"bump_amplitude", params.bump_amplitude},
                       {"bump_width", params.bump_width},
                       {"rz", params.rz},
                       {"rx_range", {params.rx_range.first, params.rx_range.second}},
                       {"ry_range", {params.ry_range.first, params.ry_range.second}},
                       {"points_per_shape", params.points_per_shape},
                       {"mesh_subdivisions", params.mesh_subdivisions},
                       {"seed", params.seed}};
  return cohort;
}

ShapeSample prepare_input(ShapeSample sample, std::size_t n, std::uint64_t seed) {
  const std::size_t total = sample.ground_truth.size();
  if (total < n) {
    throw ContractError("prepare_input: shape '" + sample.id + "' has " +
                        std::to_string(total) + " points, need " + std::to_string(n));
  }
  Rng rng(seed);
  std::vector<std::size_t> index(total);
  std::iota(index.begin(), index.end(), std::size_t{0});
  // Partial Fisher-Yates draws a uniform subset of size n...
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.index(total - i);
    std::swap(index[i], index[j]);
  }
  index.resize(n);
  // ...then an independent uniform permutation of it.
  rng.shuffle(index);
  PointCloud input;
  input.points.reserve(n);
  for (std::size_t i : index) input.points.push_back(sample.ground_truth.points[i]);
  input.provenance = std::move(index);
  sample.input = std::move(input);
  return sample;
}

PointCloud make_partial(const PointCloud& input, double missing_fraction, std::uint64_t seed) {
  if (!(missing_fraction >= 0.0) || missing_fraction >= 1.0) {
    throw ContractError("make_partial: missing fraction must lie in [0, 1)");
  }
  if (input.empty()) throw EmptySetError("make_partial: empty cloud");
  const std::size_t n = input.size();
  const auto remove = static_cast<std::size_t>(std::ceil(missing_fraction * static_cast<double>(n)));
  if (remove == 0) return input;
  Rng rng(seed);
  const Vec3 seed_point = input.points[rng.index(n)];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = (input.points[i] - seed_point).squaredNorm();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::vector<bool> dropped(n, false);
  for (std::size_t i = 0; i < remove; ++i) dropped[order[i]] = true;
  PointCloud out;
  for (std::size_t i = 0; i < n; ++i) {
    if (dropped[i]) continue;
    out.points.push_back(input.points[i]);
    if (!input.provenance.empty()) out.provenance.push_back(input.provenance[i]);
  }
  return out;
}

std::vector<std::size_t> k_medoids(const std::vector<double>& d, std::size_t n, std::size_t k,
                                   std::uint64_t seed) {
  if (k == 0 || k > n) throw ContractError("k_medoids: need 1 <= k <= n");
  auto at = [&](std::size_t i, std::size_t j) { return d[i * n + j]; };
  Rng rng(seed);
  std::vector<std::size_t> medoids = {rng.index(n)};
  std::vector<double> nearest(n);
  while (medoids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t m : medoids) best = std::min(best, at(i, m));
      nearest[i] = best * best;
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        target -= nearest[pick];
        if (target < 0.0 && nearest[pick] > 0.0) break;
      }
    } else {
      while (std::find(medoids.begin(), medoids.end(), pick) != medoids.end()) ++pick;
    }
    medoids.push_back(pick);
  }

  std::vector<std::size_t> assignment(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (at(i, medoids[c]) < at(i, medoids[best])) best = c;
      }
      assignment[i] = best;
    }
    bool changed = false;
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t best = medoids[c];
      double best_cost = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (assignment[i] != c) continue;
        double cost = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (assignment[j] == c) cost += at(i, j);
        }
        if (cost < best_cost) {
          best_cost = cost;
          best = i;
        }
      }
      if (best != medoids[c]) {
        medoids[c] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  std::sort(medoids.begin(), medoids.end());
  return medoids;
}

std::pair<std::vector<ShapeSample>, std::vector<ShapeSample>> stratified_split(
    std::vector<ShapeSample> samples, double test_fraction, std::uint64_t seed,
    std::size_t descriptor_points) {
  const std::size_t s = samples.size();
  if (s < 10) throw ContractError("stratified_split: need at least 10 samples, got " + std::to_string(s));
  if (!(test_fraction > 0.0) || test_fraction >= 1.0) {
    throw ContractError("stratified_split: test fraction must lie in (0, 1)");
  }
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(s))));

  std::vector<std::vector<Vec3>> descriptors;
  for (const ShapeSample& sample : samples) {
    const auto& pts = sample.ground_truth.points;
    const std::size_t stride =
        std::max<std::size_t>(1, (pts.size() + descriptor_points - 1) / descriptor_points);
    std::vector<Vec3> sub;
    for (std::size_t i = 0; i < pts.size(); i += stride) sub.push_back(pts[i]);
    descriptors.push_back(std::move(sub));
  }
  std::vector<double> dist(s * s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = i + 1; j < s; ++j) {
      dist[i * s + j] = dist[j * s + i] = chamfer_l1(descriptors[i], descriptors[j]);
    }
  }
  const auto medoids = k_medoids(dist, s, k, seed);
  std::vector<ShapeSample> train;
  std::vector<ShapeSample> test;
  for (std::size_t i = 0; i < s; ++i) {
    const bool is_test = std::binary_search(medoids.begin(), medoids.end(), i);
    (is_test ? test : train).push_back(std::move(samples[i]));
  }
  return {std::move(train), std::move(test)};
}

MeshLoadReport load_mesh_cohort(const std::filesystem::path& directory) {
  MeshLoadReport report;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ply" || ext == ".obj") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      TriangleMesh mesh = io::read_mesh(file);
      remove_degenerate_triangles(mesh);
      if (mesh.triangles.empty()) throw DegeneracyError("no non-degenerate triangles");
      report.meshes.push_back({file.stem().string(), std::move(mesh)});
    } catch (const std::exception& e) {
      report.errors.push_back(file.filename().string() + ": " + e.what());
    }
  }
  return report;
}

Cohort cohort_from_meshes(std::vector<LoadedMesh> meshes, double test_fraction,
                          std::uint64_t seed) {
  std::vector<ShapeSample> samples;
  for (auto& m : meshes) {
    ShapeSample s;
    s.id = m.id;
    s.ground_truth = PointCloud(m.mesh.vertices);
    s.mesh = std::move(m.mesh);
    samples.push_back(std::move(s));
  }
  Cohort cohort;
  std::tie(cohort.train, cohort.test) = stratified_split(std::move(samples), test_fraction, seed);
  cohort.provenance = {{"generator", "mesh_directory"}, {"test_fraction", test_fraction},
                       {"seed", seed}};
  return cohort;
}

Cohort prepare_cohort(Cohort raw, const PrepareOptions& options) {
  if (raw.train.empty()) throw ContractError("prepare_cohort: empty training set");
  CohortFrame frame;
  std::vector<PointCloud> train_clouds;
  for (const auto& s : raw.train) train_clouds.push_back(s.ground_truth);
  std::vector<RigidTransform> train_transforms(raw.train.size());
  std::size_t ref = 0;
  if (options.align && raw.train.size() >= 2) {
    std::vector<std::string> ids;
    for (const auto& s : raw.train) ids.push_back(s.id);
    const AlignedCohort aligned = align_cohort(train_clouds, ids, options.alignment);
    train_transforms = aligned.frame.transforms;
    train_clouds = aligned.clouds;
    ref = static_cast<std::size_t>(
        std::find(ids.begin(), ids.end(), aligned.frame.reference_id) - ids.begin());
  }
  frame.reference_id = raw.train[ref].id;
  frame.scale = fit_scale(train_clouds);

  const KdTree ref_tree(raw.train[ref].ground_truth.points);
  auto finish = [&](ShapeSample& s, const RigidTransform& t, std::uint64_t stream) {
    frame.ids.push_back(s.id);
    frame.transforms.push_back(t);
    s.ground_truth = apply_frame(s.ground_truth, t, frame.scale);
    if (s.mesh) s.mesh = apply_frame(*s.mesh, t, frame.scale);
    s = prepare_input(std::move(s), options.input_size, derive_seed(options.seed, stream));
  };
  for (std::size_t i = 0; i < raw.train.size(); ++i) finish(raw.train[i], train_transforms[i], i);
  for (std::size_t i = 0; i < raw.test.size(); ++i) {
    RigidTransform t;
    if (options.align) {
      try {
        t = icp_rigid(raw.test[i].ground_truth.points, ref_tree, options.alignment.icp).transform;
      } catch (const DegeneracyError& e) {
        throw DegeneracyError("shape '" + raw.test[i].id + "': " + e.what());
      }
    }
    finish(raw.test[i], t, raw.train.size() + i);
  }
  raw.frame = std::move(frame);
  raw.provenance["prepare"] = {{"align", options.align},
                               {"input_size", options.input_size},
                               {"seed", options.seed},
                               {"icp_max_iter", options.alignment.icp.max_iter},
                               {"icp_tol", options.alignment.icp.tol}};
  return raw;
}

std::filesystem::path write_cohort(const std::filesystem::path& directory, const Cohort& cohort) {
  std::filesystem::create_directories(directory / "shapes");
  nlohmann::json samples = nlohmann::json::array();
  auto emit = [&](const ShapeSample& s, const char* split) {
    nlohmann::json entry = {{"id", s.id}, {"split", split}};
    if (s.label) entry["label"] = *s.label;
    entry["params"] = s.params;
    const std::string gt = "shapes/" + s.id + "_gt.ply";
    io::write_cloud(directory / gt, s.ground_truth);
    entry["ground_truth"] = gt;
    if (!s.input.empty()) {
      const std::string in = "shapes/" + s.id + "_input.ply";
      io::write_cloud(directory / in, s.input);
      entry["input"] = in;
      entry["input_provenance"] = s.input.provenance;
    }
    if (s.mesh) {
      const std::string mesh = "shapes/" + s.id + "_mesh.ply";
      io::write_ply(directory / mesh, *s.mesh);
      entry["mesh"] = mesh;
    }
    samples.push_back(std::move(entry));
  };
  for (const auto& s : cohort.train) emit(s, "train");
  for (const auto& s : cohort.test) emit(s, "test");

  nlohmann::json manifest = {{"format", "pcnssm-cohort"}, {"version", 1},
                             {"provenance", cohort.provenance}, {"samples", samples}};
  if (cohort.frame) {
    std::ofstream(directory / "frame.json") << to_json(*cohort.frame).dump(2) << '\n';
    manifest["frame"] = "frame.json";
  }
  const auto path = directory / "manifest.json";
  const auto tmp = directory / "manifest.json.tmp";
  std::ofstream(tmp) << manifest.dump(2) << '\n';
  std::filesystem::rename(tmp, path);
  return path;
}

Cohort read_cohort(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open cohort manifest " + manifest_path.string());
  const nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "pcnssm-cohort") {
    throw IoError(manifest_path.string() + " is not a cohort manifest");
  }
  const auto base = manifest_path.parent_path();
  Cohort cohort;
  cohort.provenance = manifest.value("provenance", nlohmann::json::object());
  for (const auto& entry : manifest.at("samples")) {
    ShapeSample s;
    s.id = entry.at("id").get<std::string>();
    if (entry.contains("label")) s.label = entry["label"].get<std::string>();
    s.params = entry.value("params", std::map<std::string, double>{});
    s.ground_truth = io::read_cloud(base / entry.at("ground_truth").get<std::string>());
    if (entry.contains("input")) {
      s.input = io::read_cloud(base / entry["input"].get<std::string>());
      s.input.provenance = entry.value("input_provenance", std::vector<std::size_t>{});
    }
    if (entry.contains("mesh")) s.mesh = io::read_mesh(base / entry["mesh"].get<std::string>());
    const std::string split = entry.at("split").get<std::string>();
    (split == "test" ? cohort.test : cohort.train).push_back(std::move(s));
  }
  if (manifest.contains("frame")) {
    std::ifstream fin(base / manifest["frame"].get<std::string>());
    if (!fin) throw IoError("cannot open cohort frame next to " + manifest_path.string());
    cohort.frame = frame_from_json(nlohmann::json::parse(fin));
  }
  return cohort;
}

}  // namespace pcnssm
