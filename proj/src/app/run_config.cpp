#include "pcnssm/app/run_config.hpp"

#include <fstream>

#include "pcnssm/error.hpp"
#include "pcnssm/random.hpp"

namespace pcnssm::app {

namespace {

template <typename T>
void get(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

nlohmann::json range(const std::pair<double, double>& r) { return {r.first, r.second}; }

void get_range(const nlohmann::json& j, const char* key, std::pair<double, double>& r) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw ContractError(std::string(key) + " must be [lo, hi]");
  r = {v[0].get<double>(), v[1].get<double>()};
}

const char* kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::Ellipsoids: return "ellipsoids";
    case DatasetKind::TwoGroup: return "two_group";
    case DatasetKind::Directory: return "directory";
  }
  return "";
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t master) {
  dataset.ellipsoids.seed = derive_seed(master, 1);
  dataset.two_group.seed = derive_seed(master, 1);
  dataset.split_seed = derive_seed(master, 2);
  prepare.seed = derive_seed(master, 3);
  pcn.seed = derive_seed(master, 4);
  metrics.specificity_seed = derive_seed(master, 5);
  metrics.partial_seed = derive_seed(master, 6);
}

nlohmann::json to_json(const RunConfig& c) {
  const auto& e = c.dataset.ellipsoids;
  const auto& t = c.dataset.two_group;
  nlohmann::json dataset = {
      {"kind", kind_name(c.dataset.kind)},
      {"ellipsoids",
       {{"n_train", e.n_train}, {"n_test", e.n_test}, {"rz", e.rz}, {"rx_range", range(e.rx_range)},
        {"ry_range", range(e.ry_range)}, {"points_per_shape", e.points_per_shape},
        {"mesh_subdivisions", e.mesh_subdivisions}, {"seed", e.seed}}},
      {"two_group",
       {{"n_per_group", t.n_per_group}, {"test_per_group", t.test_per_group},
        {"bump_center", {t.bump_center.x(), t.bump_center.y(), t.bump_center.z()}},
        {"bump_amplitude", t.bump_amplitude}, {"bump_width", t.bump_width}, {"rz", t.rz},
        {"rx_range", range(t.rx_range)}, {"ry_range", range(t.ry_range)},
        {"points_per_shape", t.points_per_shape}, {"mesh_subdivisions", t.mesh_subdivisions},
        {"seed", t.seed}}},
      {"directory", c.dataset.directory.string()},
      {"test_fraction", c.dataset.test_fraction},
      {"split_seed", c.dataset.split_seed}};
  nlohmann::json prepare = {
      {"align", c.prepare.align},
      {"icp_max_iter", c.prepare.alignment.icp.max_iter},
      {"icp_tol", c.prepare.alignment.icp.tol},
      {"reference", c.prepare.alignment.reference ? nlohmann::json(*c.prepare.alignment.reference)
                                                  : nlohmann::json()},
      {"medoid_points", c.prepare.alignment.medoid_points},
      {"input_size", c.prepare.input_size},
      {"seed", c.prepare.seed}};
  const auto& m = c.metrics;
  nlohmann::json metrics = {{"fscore_threshold", m.fscore_threshold},
                            {"uniformity_k", m.uniformity_k},
                            {"pca_threshold", m.pca_threshold},
                            {"specificity_samples", m.specificity_samples},
                            {"specificity_seed", m.specificity_seed},
                            {"export_modes", m.export_modes},
                            {"mode_sigmas", m.mode_sigmas},
                            {"partial_seed", m.partial_seed}};
  return {{"dataset", dataset},
          {"prepare", prepare},
          {"pcn", pcn::to_json(c.pcn)},
          {"metrics", metrics},
          {"output", c.output.string()}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key != "dataset" && key != "prepare" && key != "pcn" && key != "metrics" && key != "output" &&
        key != "seed") {
      throw ContractError("run config: unknown key '" + key + "'");
    }
  }
  RunConfig c;
  if (j.contains("seed")) c.apply_seed(j.at("seed").get<std::uint64_t>());
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    const std::string kind = d.value("kind", "ellipsoids");
    if (kind == "ellipsoids") c.dataset.kind = DatasetKind::Ellipsoids;
    else if (kind == "two_group") c.dataset.kind = DatasetKind::TwoGroup;
    else if (kind == "directory") c.dataset.kind = DatasetKind::Directory;
    else throw ContractError("run config: unknown dataset kind '" + kind + "'");
    if (d.contains("ellipsoids")) {
      const auto& e = d.at("ellipsoids");
      auto& p = c.dataset.ellipsoids;
      get(e, "n_train", p.n_train);
      get(e, "n_test", p.n_test);
      get(e, "rz", p.rz);
      get_range(e, "rx_range", p.rx_range);
      get_range(e, "ry_range", p.ry_range);
      get(e, "points_per_shape", p.points_per_shape);
      get(e, "mesh_subdivisions", p.mesh_subdivisions);
      get(e, "seed", p.seed);
    }
    if (d.contains("two_group")) {
      const auto& t = d.at("two_group");
      auto& p = c.dataset.two_group;
      get(t, "n_per_group", p.n_per_group);
      get(t, "test_per_group", p.test_per_group);
      if (t.contains("bump_center")) {
        const auto& v = t.at("bump_center");
        p.bump_center = Vec3(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
      }
      get(t, "bump_amplitude", p.bump_amplitude);
      get(t, "bump_width", p.bump_width);
      get(t, "rz", p.rz);
      get_range(t, "rx_range", p.rx_range);
      get_range(t, "ry_range", p.ry_range);
      get(t, "points_per_shape", p.points_per_shape);
      get(t, "mesh_subdivisions", p.mesh_subdivisions);
      get(t, "seed", p.seed);
    }
    if (d.contains("directory")) c.dataset.directory = d.at("directory").get<std::string>();
    get(d, "test_fraction", c.dataset.test_fraction);
    get(d, "split_seed", c.dataset.split_seed);
  }
  if (j.contains("prepare")) {
    const auto& p = j.at("prepare");
    get(p, "align", c.prepare.align);
    get(p, "icp_max_iter", c.prepare.alignment.icp.max_iter);
    get(p, "icp_tol", c.prepare.alignment.icp.tol);
    if (p.contains("reference") && !p.at("reference").is_null()) {
      c.prepare.alignment.reference = p.at("reference").get<std::size_t>();
    }
    get(p, "medoid_points", c.prepare.alignment.medoid_points);
    get(p, "input_size", c.prepare.input_size);
    get(p, "seed", c.prepare.seed);
  }
  if (j.contains("pcn")) {
    const std::uint64_t seed = c.pcn.seed;
    nlohmann::json pj = j.at("pcn");
    if (!pj.contains("seed")) pj["seed"] = seed;
    c.pcn = pcn::config_from_json(pj);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    auto& s = c.metrics;
    get(m, "fscore_threshold", s.fscore_threshold);
    get(m, "uniformity_k", s.uniformity_k);
    get(m, "pca_threshold", s.pca_threshold);
    get(m, "specificity_samples", s.specificity_samples);
    get(m, "specificity_seed", s.specificity_seed);
    get(m, "export_modes", s.export_modes);
    get(m, "mode_sigmas", s.mode_sigmas);
    get(m, "partial_seed", s.partial_seed);
  }
  if (j.contains("output")) c.output = j.at("output").get<std::string>();
  if (c.prepare.input_size != c.pcn.input_size) {
    throw ContractError("run config: prepare.input_size " + std::to_string(c.prepare.input_size) +
                        " differs from pcn.input_size " + std::to_string(c.pcn.input_size));
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return run_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("config " + path.string() + ": " + e.what());
  }
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  std::ofstream(tmp) << to_json(config).dump(2) << '\n';
  std::filesystem::rename(tmp, path);
}

}  // namespace pcnssm::app
