#include "pcnssm/app/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#include "pcnssm/error.hpp"
#include "pcnssm/geometry/io.hpp"
#include "pcnssm/geometry/metrics.hpp"
#include "pcnssm/random.hpp"

namespace pcnssm::app {

namespace fs = std::filesystem;

namespace {

double mean_of(const std::vector<ShapeMetrics>& shapes, double ShapeMetrics::*field) {
  double s = 0.0;
  for (const auto& m : shapes) s += m.*field;
  return s / static_cast<double>(shapes.size());
}

std::optional<double> mean_of(const std::vector<ShapeMetrics>& shapes,
                              std::optional<double> ShapeMetrics::*field) {
  double s = 0.0;
  for (const auto& m : shapes) {
    if (!(m.*field)) return std::nullopt;
    s += *(m.*field);
  }
  return s / static_cast<double>(shapes.size());
}

nlohmann::json optional_json(const std::optional<double>& v, double factor = 1.0) {
  return v ? nlohmann::json(*v * factor) : nlohmann::json();
}

std::string relative_name(const fs::path& p, const fs::path& base) {
  return fs::relative(p, base).generic_string();
}

// Adds `files` under `command` in out/run.json; paths are stored relative
// to `out` and in sorted order so reruns write identical manifests.
void record_outputs(const fs::path& out, const std::string& command,
                    const std::vector<fs::path>& files, const std::vector<fs::path>& logs = {}) {
  const fs::path path = out / "run.json";
  nlohmann::json run = fs::exists(path) ? read_json(path) : nlohmann::json::object();
  run["format"] = "pcnssm-run";
  std::set<std::string> names, log_names;
  for (const auto& f : files) names.insert(relative_name(f, out));
  for (const auto& f : logs) log_names.insert(relative_name(f, out));
  run["outputs"][command] = names;
  if (!log_names.empty()) run["logs"][command] = log_names;
  write_json(path, run);
}

void append_run_log(const fs::path& out, const std::string& command, double seconds) {
  std::ofstream log(out / "run_log.txt", std::ios::app);
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  log << stamp << ' ' << command << ' ' << seconds << "s\n";
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Cohort generate_raw(const RunConfig& config) {
  switch (config.dataset.kind) {
    case DatasetKind::Ellipsoids: return generate_ellipsoids(config.dataset.ellipsoids);
    case DatasetKind::TwoGroup: return generate_two_group(config.dataset.two_group);
    case DatasetKind::Directory: break;
  }
  MeshLoadReport report = load_mesh_cohort(config.dataset.directory);
  for (const auto& e : report.errors) {
    std::cerr << "warning: skipped " << e << '\n';
  }
  if (report.meshes.empty()) {
    throw IoError("no readable meshes in " + config.dataset.directory.string());
  }
  Cohort cohort =
      cohort_from_meshes(std::move(report.meshes), config.dataset.test_fraction, config.dataset.split_seed);
  cohort.provenance["directory"] = config.dataset.directory.string();
  cohort.provenance["skipped"] = report.errors;
  return cohort;
}

std::vector<fs::path> cohort_files(const fs::path& dir, const Cohort& cohort) {
  std::vector<fs::path> files = {dir / "manifest.json"};
  if (cohort.frame) files.push_back(dir / "frame.json");
  auto add = [&](const ShapeSample& s) {
    files.push_back(dir / "shapes" / (s.id + "_gt.ply"));
    if (!s.input.empty()) files.push_back(dir / "shapes" / (s.id + "_input.ply"));
    if (s.mesh) files.push_back(dir / "shapes" / (s.id + "_mesh.ply"));
  };
  for (const auto& s : cohort.train) add(s);
  for (const auto& s : cohort.test) add(s);
  return files;
}

void require_prepared(const Cohort& cohort, const fs::path& manifest) {
  if (cohort.train.empty()) throw ContractError(manifest.string() + " has no training shapes");
  for (const auto* split : {&cohort.train, &cohort.test}) {
    for (const auto& s : *split) {
      if (s.input.empty()) {
        throw ContractError(manifest.string() + ": shape '" + s.id +
                            "' has no input cloud; run the align command first");
      }
    }
  }
}

double scale_of(const Cohort& cohort) { return cohort.frame ? cohort.frame->scale : 1.0; }

nlohmann::json model_metrics_json(const ShapeModelMetrics& m, double scale) {
  return {{"compactness", m.compactness},
          {"generalization", m.generalization},
          {"generalization_original_units", m.generalization / scale},
          {"specificity", m.specificity},
          {"specificity_original_units", m.specificity / scale}};
}

void write_pdm_csv(std::ofstream& out, const ssm::Pdm& pdm, const std::string& split) {
  for (std::size_t i = 0; i < pdm.shapes(); ++i) {
    out << pdm.ids[i] << ',' << split << ',' << (pdm.labels.empty() ? "" : pdm.labels[i]);
    char buf[40];
    for (Eigen::Index c = 0; c < pdm.rows.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", pdm.rows(static_cast<Eigen::Index>(i), c));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace

Logger stderr_logger() {
  return [](const std::string& line) { std::cerr << line << std::endl; };
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

SplitMetrics evaluate_split(const pcn::PcnModel& model, std::span<const ShapeSample> samples,
                            const MetricSettings& settings, double missing) {
  if (samples.empty()) throw EmptySetError("evaluate_split: no shapes");
  SplitMetrics out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ShapeSample& s = samples[i];
    const PointCloud input =
        missing > 0.0 ? make_partial(s.input, missing, derive_seed(settings.partial_seed, i)) : s.input;
    const pcn::Prediction p = pcn::predict(model, input);
    ShapeMetrics m;
    m.id = s.id;
    m.coarse_cd = chamfer_l1(p.coarse, s.ground_truth);
    m.dense_cd = chamfer_l1(p.dense, s.ground_truth);
    m.coarse_fscore = fscore(p.coarse.points, s.ground_truth.points, settings.fscore_threshold).f;
    m.dense_fscore = fscore(p.dense.points, s.ground_truth.points, settings.fscore_threshold).f;
    if (s.mesh) {
      const MeshDistance surface(*s.mesh);
      auto mean_distance = [&](const PointCloud& c) {
        double sum = 0.0;
        for (const Vec3& q : c.points) sum += surface.distance(q);
        return sum / static_cast<double>(c.size());
      };
      m.coarse_p2f = mean_distance(p.coarse);
      m.dense_p2f = mean_distance(p.dense);
    }
    m.coarse_uniformity = uniformity(p.coarse.points, settings.uniformity_k);
    out.shapes.push_back(std::move(m));
  }
  out.coarse_cd = mean_of(out.shapes, &ShapeMetrics::coarse_cd);
  out.dense_cd = mean_of(out.shapes, &ShapeMetrics::dense_cd);
  out.coarse_fscore = mean_of(out.shapes, &ShapeMetrics::coarse_fscore);
  out.dense_fscore = mean_of(out.shapes, &ShapeMetrics::dense_fscore);
  out.coarse_p2f = mean_of(out.shapes, &ShapeMetrics::coarse_p2f);
  out.dense_p2f = mean_of(out.shapes, &ShapeMetrics::dense_p2f);
  out.coarse_uniformity = mean_of(out.shapes, &ShapeMetrics::coarse_uniformity);
  return out;
}

ShapeModelMetrics shape_model_metrics(const ssm::Pdm& train, const ssm::Pdm& test,
                                      const MetricSettings& settings) {
  const ssm::ShapeModel model = ssm::fit_pca(train.rows);
  ShapeModelMetrics m;
  m.compactness = ssm::compactness(model, settings.pca_threshold);
  m.generalization = ssm::generalization(model, test.rows, settings.pca_threshold);
  m.specificity = ssm::specificity(model, train.rows, settings.specificity_samples,
                                   settings.pca_threshold, settings.specificity_seed);
  return m;
}

ShapeModelMetrics combined_model_metrics(const ssm::Pdm& all, const MetricSettings& settings) {
  const ssm::ShapeModel model = ssm::fit_pca(all.rows);
  ShapeModelMetrics m;
  m.compactness = ssm::compactness(model, settings.pca_threshold);
  m.specificity = ssm::specificity(model, all.rows, settings.specificity_samples,
                                   settings.pca_threshold, settings.specificity_seed);
  if (all.shapes() >= 3) {
    double sum = 0.0;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < all.shapes(); ++i) {
      rest.clear();
      for (std::size_t j = 0; j < all.shapes(); ++j) {
        if (j != i) rest.push_back(j);
      }
      const ssm::ShapeModel loo = ssm::fit_pca(ssm::select(all, rest).rows);
      sum += ssm::generalization(loo, all.rows.row(static_cast<Eigen::Index>(i)), settings.pca_threshold);
    }
    m.generalization = sum / static_cast<double>(all.shapes());
  }
  return m;
}

MetricsReport evaluate(const pcn::PcnModel& model, const Cohort& cohort,
                       const MetricSettings& settings) {
  MetricsReport r;
  r.scale = scale_of(cohort);
  r.train = evaluate_split(model, cohort.train, settings);
  if (!cohort.test.empty()) r.test = evaluate_split(model, cohort.test, settings);
  const ssm::Pdm train = ssm::build_pdm(model, cohort.train);
  if (train.shapes() >= 2 && !cohort.test.empty()) {
    const ssm::Pdm test = ssm::build_pdm(model, cohort.test);
    r.train_model = shape_model_metrics(train, test, settings);
    r.combined_model = combined_model_metrics(ssm::concat(train, test), settings);
  }
  return r;
}

nlohmann::json to_json(const SplitMetrics& m, double scale) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& s : m.shapes) {
    shapes.push_back({{"id", s.id},
                      {"coarse_cd", s.coarse_cd},
                      {"dense_cd", s.dense_cd},
                      {"coarse_fscore", s.coarse_fscore},
                      {"dense_fscore", s.dense_fscore},
                      {"coarse_p2f", optional_json(s.coarse_p2f)},
                      {"dense_p2f", optional_json(s.dense_p2f)},
                      {"coarse_uniformity", s.coarse_uniformity}});
  }
  return {{"count", m.shapes.size()},
          {"coarse_cd", m.coarse_cd},
          {"coarse_cd_x1000", m.coarse_cd * 1000.0},
          {"dense_cd", m.dense_cd},
          {"dense_cd_x1000", m.dense_cd * 1000.0},
          {"coarse_fscore", m.coarse_fscore},
          {"dense_fscore", m.dense_fscore},
          {"coarse_p2f", optional_json(m.coarse_p2f)},
          {"coarse_p2f_original_units", optional_json(m.coarse_p2f, 1.0 / scale)},
          {"dense_p2f", optional_json(m.dense_p2f)},
          {"dense_p2f_original_units", optional_json(m.dense_p2f, 1.0 / scale)},
          {"coarse_uniformity", m.coarse_uniformity},
          {"shapes", shapes}};
}

nlohmann::json to_json(const MetricsReport& r) {
  // Table layout: one row per split, CD scaled by 1000.
  auto row = [&](const SplitMetrics& m) {
    return nlohmann::json{{"CD_x1000", m.coarse_cd * 1000.0},
                          {"Fscore", m.coarse_fscore},
                          {"P2F", optional_json(m.coarse_p2f)},
                          {"P2F_original_units", optional_json(m.coarse_p2f, 1.0 / r.scale)},
                          {"uniformity", m.coarse_uniformity},
                          {"compactness", r.train_model.compactness},
                          {"generalization", r.train_model.generalization},
                          {"specificity", r.train_model.specificity}};
  };
  nlohmann::json j = {{"scale", r.scale},
                      {"table", {{"train", row(r.train)}}},
                      {"train", to_json(r.train, r.scale)},
                      {"shape_model",
                       {{"train_fit", model_metrics_json(r.train_model, r.scale)},
                        {"combined_fit", model_metrics_json(r.combined_model, r.scale)}}}};
  if (!r.test.shapes.empty()) {
    j["table"]["test"] = row(r.test);
    j["test"] = to_json(r.test, r.scale);
  }
  return j;
}

namespace {

// Pearson r of each score column against every generator parameter that
// all samples carry and that varies.
std::map<std::string, std::vector<double>> parameter_correlation(
    const Eigen::MatrixXd& scores, const std::vector<const ShapeSample*>& samples) {
  std::set<std::string> names;
  for (const auto* s : samples) {
    for (const auto& [k, v] : s->params) names.insert(k);
  }
  std::map<std::string, std::vector<double>> out;
  for (const std::string& name : names) {
    std::vector<double> values;
    for (const auto* s : samples) {
      const auto it = s->params.find(name);
      if (it == s->params.end()) break;
      values.push_back(it->second);
    }
    if (values.size() != samples.size()) continue;
    if (*std::max_element(values.begin(), values.end()) == *std::min_element(values.begin(), values.end())) {
      continue;
    }
    std::vector<double> per_mode;
    for (Eigen::Index k = 0; k < scores.cols(); ++k) {
      std::vector<double> col(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) col[i] = scores(static_cast<Eigen::Index>(i), k);
      per_mode.push_back(ssm::pearson(col, values));
    }
    out[name] = per_mode;
  }
  return out;
}

}  // namespace

SsmReport analyze_shapes(const pcn::PcnModel& model, const Cohort& cohort,
                         const MetricSettings& settings) {
  SsmReport r;
  r.train_pdm = ssm::build_pdm(model, cohort.train);
  r.model = ssm::fit_pca(r.train_pdm.rows);
  std::vector<const ShapeSample*> all;
  for (const auto& s : cohort.train) all.push_back(&s);
  if (!cohort.test.empty()) {
    r.test_pdm = ssm::build_pdm(model, cohort.test);
    for (const auto& s : cohort.test) all.push_back(&s);
  }
  const ssm::Pdm combined =
      cohort.test.empty() ? r.train_pdm : ssm::concat(r.train_pdm, r.test_pdm);

  const std::size_t modes = std::min(settings.export_modes, r.model.mode_count());
  std::vector<const ShapeSample*> train;
  for (const auto& s : cohort.train) train.push_back(&s);
  r.parameter_correlation = parameter_correlation(r.model.scores(r.train_pdm.rows, modes), train);
  r.parameter_correlation_all = parameter_correlation(r.model.scores(combined.rows, modes), all);

  if (combined.labels.size() == combined.shapes()) {
    const std::set<std::string> distinct(combined.labels.begin(), combined.labels.end());
    if (distinct.size() == 2) {
      r.group_difference = ssm::group_difference(combined);
      r.lda = ssm::lda_axis(combined, settings.pca_threshold);
    }
  }
  return r;
}

fs::path cmd_generate(const RunConfig& config, const fs::path& out, const Logger& log) {
  const Stopwatch watch;
  fs::create_directories(out);
  save_run_config(out / "config.json", config);
  log("generating cohort");
  const Cohort cohort = generate_raw(config);
  const fs::path manifest = write_cohort(out / "raw", cohort);
  log("wrote " + std::to_string(cohort.train.size()) + " train and " +
      std::to_string(cohort.test.size()) + " test shapes to " + manifest.string());
  auto files = cohort_files(out / "raw", cohort);
  files.push_back(out / "config.json");
  record_outputs(out, "generate", files, {out / "run_log.txt"});
  append_run_log(out, "generate", watch.seconds());
  return manifest;
}

fs::path cmd_align(const RunConfig& config, const fs::path& raw_manifest, const fs::path& out,
                   const Logger& log) {
  const Stopwatch watch;
  Cohort raw = read_cohort(raw_manifest);
  log("aligning " + std::to_string(raw.train.size() + raw.test.size()) + " shapes");
  const Cohort prepared = prepare_cohort(std::move(raw), config.prepare);
  const fs::path manifest = write_cohort(out, prepared);
  log("frame scale " + std::to_string(prepared.frame->scale) + ", reference " +
      prepared.frame->reference_id);
  record_outputs(out, "align", cohort_files(out, prepared), {out / "run_log.txt"});
  append_run_log(out, "align", watch.seconds());
  return manifest;
}

fs::path cmd_train(const RunConfig& config, const fs::path& manifest, const fs::path& out,
                   const Logger& log) {
  const Stopwatch watch;
  const Cohort cohort = read_cohort(manifest);
  require_prepared(cohort, manifest);
  fs::create_directories(out);
  pcn::TrainOptions options;
  options.checkpoint = out / "checkpoint.bin";
  options.on_epoch = [&](const pcn::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu coarse_cd %.6f dense_cd %.6f loss %.6f (%.2fs)", r.epoch,
                  r.coarse_cd, r.dense_cd, r.loss, r.seconds);
    log(line);
  };
  log("training on " + std::to_string(cohort.train.size()) + " shapes");
  const pcn::TrainResult result = pcn::train(cohort.train, config.pcn, options);
  pcn::write_history_csv(out / "history.csv", result.history, false);
  {
    std::ofstream timing(out / "timing.csv");
    timing << "epoch,seconds\n";
    for (const auto& r : result.history.epochs) timing << r.epoch << ',' << r.seconds << '\n';
  }
  write_json(out / "train_summary.json",
             {{"epochs", result.history.epochs.size()},
              {"best_epoch", result.history.best_epoch},
              {"best_coarse_cd", result.history.best_coarse_cd},
              {"stop_reason", result.history.stop_reason},
              {"parameters", result.model.parameter_count()},
              {"train_shapes", cohort.train.size()},
              {"pcn", pcn::to_json(config.pcn)}});
  log("best epoch " + std::to_string(result.history.best_epoch) + " (" + result.history.stop_reason + ")");
  record_outputs(out, "train", {out / "checkpoint.bin", out / "history.csv", out / "train_summary.json"},
                 {out / "timing.csv", out / "run_log.txt"});
  append_run_log(out, "train", watch.seconds());
  return out / "checkpoint.bin";
}

fs::path cmd_evaluate(const RunConfig& config, const fs::path& checkpoint, const fs::path& manifest,
                      const fs::path& out, const Logger& log) {
  const Stopwatch watch;
  const pcn::PcnModel model = pcn::PcnModel::load(checkpoint);
  const Cohort cohort = read_cohort(manifest);
  require_prepared(cohort, manifest);
  log("evaluating " + std::to_string(cohort.train.size() + cohort.test.size()) + " shapes");
  const MetricsReport report = evaluate(model, cohort, config.metrics);
  const fs::path path = out / "metrics.json";
  write_json(path, to_json(report));
  record_outputs(out, "evaluate", {path}, {out / "run_log.txt"});
  append_run_log(out, "evaluate", watch.seconds());
  return path;
}

fs::path cmd_ssm(const RunConfig& config, const fs::path& checkpoint, const fs::path& manifest,
                 const fs::path& out, const Logger& log) {
  const Stopwatch watch;
  const pcn::PcnModel model = pcn::PcnModel::load(checkpoint);
  const Cohort cohort = read_cohort(manifest);
  require_prepared(cohort, manifest);
  log("building shape model");
  const SsmReport r = analyze_shapes(model, cohort, config.metrics);
  const fs::path dir = out / "ssm";
  ssm::save_shape_model(dir, r.model);
  std::vector<fs::path> files = {dir / "shape_model.json", dir / "shape_model.bin"};
  const auto modes = ssm::export_mode_clouds(dir / "modes", r.model, config.metrics.export_modes,
                                             config.metrics.mode_sigmas);
  files.insert(files.end(), modes.begin(), modes.end());
  {
    const fs::path csv = dir / "correspondences.csv";
    std::ofstream f(csv.string() + ".tmp");
    f << "id,split,label";
    for (std::size_t j = 0; j < r.train_pdm.points(); ++j) f << ",x" << j << ",y" << j << ",z" << j;
    f << '\n';
    write_pdm_csv(f, r.train_pdm, "train");
    if (r.test_pdm.shapes() > 0) write_pdm_csv(f, r.test_pdm, "test");
    f.close();
    fs::rename(csv.string() + ".tmp", csv);
    files.push_back(csv);
  }

  nlohmann::json analysis;
  const double total = r.model.variances.sum();
  std::vector<double> fraction;
  for (std::size_t k = 0; k < r.model.mode_count(); ++k) {
    fraction.push_back(total > 0 ? r.model.variances(static_cast<Eigen::Index>(k)) / total : 0.0);
  }
  analysis["variance_fraction"] = fraction;
  analysis["compactness"] = ssm::compactness(r.model, config.metrics.pca_threshold);
  analysis["parameter_correlation"] = {{"train", r.parameter_correlation},
                                       {"all", r.parameter_correlation_all}};
  if (r.group_difference) {
    const auto& g = *r.group_difference;
    const ssm::Pdm all = ssm::concat(r.train_pdm, r.test_pdm);
    const Eigen::VectorXd mean = all.rows.colwise().mean().transpose();
    const fs::path csv = dir / "group_difference.csv";
    std::ofstream f(csv.string() + ".tmp");
    f << "index,x,y,z,dx,dy,dz,magnitude\n";
    char buf[256];
    for (std::size_t j = 0; j < g.magnitude.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(3 * j);
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", j, mean(c),
                    mean(c + 1), mean(c + 2), g.displacement[j].x(), g.displacement[j].y(),
                    g.displacement[j].z(), g.magnitude[j]);
      f << buf;
    }
    f.close();
    fs::rename(csv.string() + ".tmp", csv);
    files.push_back(csv);
    analysis["group_difference"] = {{"group_a", g.group_a},
                                    {"group_b", g.group_b},
                                    {"max_magnitude", *std::max_element(g.magnitude.begin(), g.magnitude.end())},
                                    {"file", "group_difference.csv"}};
  }
  if (r.lda) {
    const ssm::Pdm all = ssm::concat(r.train_pdm, r.test_pdm);
    nlohmann::json projections = nlohmann::json::array();
    for (std::size_t i = 0; i < r.lda->projections.size(); ++i) {
      projections.push_back({{"id", all.ids[i]}, {"label", all.labels[i]}, {"projection", r.lda->projections[i]}});
    }
    analysis["lda"] = {{"group_a", r.lda->group_a},
                       {"group_b", r.lda->group_b},
                       {"retained_modes", r.lda->retained_modes},
                       {"direction", std::vector<double>(r.lda->direction.data(),
                                                         r.lda->direction.data() + r.lda->direction.size())},
                       {"threshold", r.lda->threshold},
                       {"accuracy", r.lda->accuracy},
                       {"projections", projections}};
  }
  write_json(dir / "analysis.json", analysis);
  files.push_back(dir / "analysis.json");
  record_outputs(out, "ssm", files, {out / "run_log.txt"});
  append_run_log(out, "ssm", watch.seconds());
  return dir / "analysis.json";
}

fs::path cmd_ablate_size(const RunConfig& config, const fs::path& manifest,
                         std::span<const std::size_t> sizes, const fs::path& out, const Logger& log) {
  const Stopwatch watch;
  const Cohort cohort = read_cohort(manifest);
  require_prepared(cohort, manifest);
  if (cohort.test.empty()) throw ContractError("ablate-size needs test shapes");
  nlohmann::json series = nlohmann::json::array();
  std::vector<fs::path> files;
  for (std::size_t n : sizes) {
    if (n == 0 || n > cohort.train.size()) {
      throw ContractError("ablate-size: size " + std::to_string(n) + " outside 1.." +
                          std::to_string(cohort.train.size()));
    }
    log("training on the first " + std::to_string(n) + " shapes");
    const std::span<const ShapeSample> subset(cohort.train.data(), n);
    const fs::path dir = out / "ablate_size" / ("n" + std::to_string(n));
    fs::create_directories(dir);
    pcn::TrainOptions options;
    options.checkpoint = dir / "checkpoint.bin";
    const pcn::TrainResult result = pcn::train(subset, config.pcn, options);
    pcn::write_history_csv(dir / "history.csv", result.history, false);
    const SplitMetrics test = evaluate_split(result.model, cohort.test, config.metrics);
    series.push_back({{"train_size", n},
                      {"epochs", result.history.epochs.size()},
                      {"best_epoch", result.history.best_epoch},
                      {"test", to_json(test, scale_of(cohort))}});
    files.push_back(dir / "checkpoint.bin");
    files.push_back(dir / "history.csv");
    log("  test coarse CD x1000 = " + std::to_string(test.coarse_cd * 1000.0));
  }
  const fs::path path = out / "ablate_size.json";
  write_json(path, {{"series", series}});
  files.push_back(path);
  record_outputs(out, "ablate-size", files, {out / "run_log.txt"});
  append_run_log(out, "ablate-size", watch.seconds());
  return path;
}

fs::path cmd_ablate_partial(const RunConfig& config, const fs::path& checkpoint,
                            const fs::path& manifest, std::span<const double> fractions,
                            const fs::path& out, const Logger& log) {
  const Stopwatch watch;
  const pcn::PcnModel model = pcn::PcnModel::load(checkpoint);
  const Cohort cohort = read_cohort(manifest);
  require_prepared(cohort, manifest);
  if (cohort.test.empty()) throw ContractError("ablate-partial needs test shapes");
  nlohmann::json series = nlohmann::json::array();
  for (double p : fractions) {
    log("evaluating with " + std::to_string(p * 100.0) + "% of each input removed");
    const SplitMetrics test = evaluate_split(model, cohort.test, config.metrics, p);
    series.push_back({{"missing_fraction", p}, {"test", to_json(test, scale_of(cohort))}});
  }
  const fs::path path = out / "ablate_partial.json";
  write_json(path, {{"series", series}});
  record_outputs(out, "ablate-partial", {path}, {out / "run_log.txt"});
  append_run_log(out, "ablate-partial", watch.seconds());
  return path;
}

fs::path cmd_run(const RunConfig& config, const fs::path& out, const Logger& log) {
  const fs::path raw = cmd_generate(config, out, log);
  const fs::path manifest = cmd_align(config, raw, out, log);
  const fs::path checkpoint = cmd_train(config, manifest, out, log);
  cmd_evaluate(config, checkpoint, manifest, out, log);
  cmd_ssm(config, checkpoint, manifest, out, log);
  return out / "run.json";
}

}  // namespace pcnssm::app
