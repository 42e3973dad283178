// End-to-end acceptance run. Trains the desk-scale network on the ellipsoid
// and two-group cohorts, runs both ablations, and prints one PASS/FAIL line
// per criterion. Exit status is nonzero when any criterion fails.
//
//   test_acceptance [--work DIR] [--config FILE] [--epochs N] [--reuse]
//
// --reuse skips a training run whose outputs already exist under DIR.

#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pcnssm/alignment/alignment.hpp"
#include "pcnssm/autodiff/ops.hpp"
#include "pcnssm/app/pipeline.hpp"
#include "pcnssm/datasets/datasets.hpp"
#include "pcnssm/error.hpp"
#include "pcnssm/geometry/kdtree.hpp"
#include "pcnssm/geometry/metrics.hpp"
#include "pcnssm/pcn/loss.hpp"
#include "pcnssm/pcn/model.hpp"
#include "pcnssm/random.hpp"
#include "pcnssm/ssm/ssm.hpp"
#include "support/oracles.hpp"

using namespace pcnssm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  outcomes.push_back({id, name, pass, detail});
  std::printf("%s criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[192];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

app::Logger quiet_logger() {
  return [](const std::string& line) { std::fprintf(stderr, "  %s\n", line.c_str()); };
}

// Runs cmd_run unless --reuse is given and the run already finished.
void run_pipeline(const app::RunConfig& config, const fs::path& dir, bool reuse) {
  if (reuse && fs::exists(dir / "ssm" / "analysis.json") && fs::exists(dir / "metrics.json")) {
    std::fprintf(stderr, "reusing %s\n", dir.string().c_str());
    return;
  }
  fs::remove_all(dir);
  app::cmd_run(config, dir, quiet_logger());
}

// ---- property suite -------------------------------------------------------

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(rng.normal(), rng.normal(), rng.normal());
  return c;
}

pcn::PcnConfig tiny_pcn() {
  pcn::PcnConfig c;
  c.input_size = 32;
  c.coarse_size = 8;
  c.dense_size = 32;
  c.latent_dim = 16;
  c.encoder1 = {8, 12};
  c.encoder2 = {16, 16};
  c.decoder = {16, 16, 24};
  c.folding = {16, 16, 3};
  c.seed = 3;
  return c;
}

pcn::PcnConfig small_pcn() {
  pcn::PcnConfig c;
  c.input_size = 256;
  c.coarse_size = 64;
  c.dense_size = 256;
  c.latent_dim = 64;
  c.encoder1 = {32, 64};
  c.encoder2 = {64, 64};
  c.decoder = {128, 192};
  c.folding = {32, 32, 3};
  c.seed = 5;
  return c;
}

// Worst relative error between backprop and central differences over every
// parameter of a small network, skipping entries whose stencil crosses a
// ReLU, max or matching switch.
std::string finite_difference_check(bool& ok) {
  pcn::PcnModel model(tiny_pcn());
  auto params = model.parameters();
  Rng rng(9);
  for (auto& p : params) {
    for (double& v : p.mutable_values()) {
      if (v == 0.0) v = rng.uniform(-0.3, 0.3);
    }
  }
  const PointCloud x = random_cloud(32, 4);
  const PointCloud gt = random_cloud(40, 5);
  const KdTree tree(gt.points);
  const std::vector<pcn::ChamferTarget> targets = {{gt.points, &tree}};
  auto loss_of = [&](ad::Graph& g) {
    const auto out = model.forward(g, pcn::batch_tensor(x));
    return ad::add(g, pcn::chamfer_loss(g, out.coarse, targets),
                   ad::scale(g, pcn::chamfer_loss(g, out.dense, targets), 0.7));
  };
  ad::Graph g;
  ad::Tensor loss = loss_of(g);
  g.backward(loss);

  const double h = 1e-6;
  std::size_t checked = 0, kinks = 0;
  double worst = 0.0;
  for (auto& p : params) {
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto eval = [&](double v) {
        values[i] = v;
        ad::Graph off(false);
        return loss_of(off).item();
      };
      const double up = eval(saved + h), mid = eval(saved), down = eval(saved - h);
      values[i] = saved;
      if (std::abs((up - mid) - (mid - down)) > 1e-9 * std::max(1.0, std::abs(mid))) {
        ++kinks;
        continue;
      }
      ++checked;
      const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
      worst = std::max(worst, oracle::relative_error(analytic, (up - down) / (2 * h), 1e-5));
    }
  }
  ok = worst < 1e-4 && checked > 1000 && kinks * 100 < checked;
  return "max rel err " + fmt("%.2e", worst) + " over " + std::to_string(checked) + " entries";
}

std::string permutation_check(bool& ok) {
  const pcn::PcnModel model(small_pcn());
  const PointCloud x = random_cloud(256, 7);
  const auto a = pcn::predict(model, x);
  ok = true;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(idx);
    PointCloud y;
    for (std::size_t i : idx) y.points.push_back(x.points[i]);
    const auto b = pcn::predict(model, y);
    ok = ok && a.feature == b.feature && a.coarse.points == b.coarse.points &&
         a.dense.points == b.dense.points;
  }
  return "4 permutations, bitwise equal outputs";
}

std::string knn_check(bool& ok) {
  const PointCloud pts = random_cloud(3000, 21);
  const PointCloud queries = random_cloud(300, 22);
  const KdTree tree(pts.points);
  ok = true;
  for (const Vec3& q : queries.points) {
    const auto got = tree.nearest(q, 10);
    const auto want = oracle::linear_scan(pts.points, q, 10);
    for (std::size_t i = 0; i < 10; ++i) {
      ok = ok && got[i].index == want[i].index && got[i].distance == want[i].distance;
    }
  }
  return "300 queries, k = 10";
}

std::string icp_check(bool& ok) {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    // Anisotropic clusters at irregular offsets, so the optimum is unique.
    const Vec3 centers[] = {{0, 0, 0}, {1.2, 0.3, -0.2}, {-0.4, 0.9, 0.5}, {0.2, -0.7, 1.0}};
    const double widths[] = {0.5, 0.25, 0.35, 0.15};
    PointCloud source;
    for (std::size_t i = 0; i < 2000; ++i) {
      const std::size_t k = i % 4;
      source.points.push_back(centers[k] + widths[k] * Vec3(rng.normal(), 0.6 * rng.normal(), 0.3 * rng.normal()));
    }
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    RigidTransform truth;
    truth.rotation = Eigen::AngleAxisd(rng.uniform(0.05, 0.5), axis).toRotationMatrix();
    truth.translation = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
    const PointCloud reference = apply_frame(source, truth, 1.0);
    const IcpResult fit = icp_rigid(source.points, reference.points);
    RigidTransform d;
    d.rotation = fit.transform.rotation * truth.rotation.transpose();
    worst = std::max(worst, d.angle());
  }
  ok = worst < 1e-3;
  return "max rotation error " + fmt("%.2e", worst) + " rad";
}

std::string pca_check(bool& ok) {
  const std::size_t s = 14, d = 12;
  Rng rng(31);
  Eigen::MatrixXd rows(s, d);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < d; ++j) rows(i, j) = rng.normal() * (1.0 + static_cast<double>(j % 5));
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  std::vector<double> cov(d * d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s; ++i) acc += centered(i, a) * centered(i, b);
      cov[a * d + b] = acc / static_cast<double>(s - 1);
    }
  std::vector<double> values, vectors;
  oracle::jacobi_eigen(cov, d, values, vectors);
  double worst = 0.0;
  for (auto route : {ssm::PcaRoute::Gram, ssm::PcaRoute::Covariance}) {
    const ssm::ShapeModel model = ssm::fit_pca(rows, route);
    for (std::size_t k = 0; k < model.mode_count(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      worst = std::max(worst, std::abs(model.variances(kk) - values[k]));
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += model.modes(static_cast<Eigen::Index>(j), kk) * vectors[j * d + k];
      const double sign = dot < 0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < d; ++j) {
        worst = std::max(worst, std::abs(model.modes(static_cast<Eigen::Index>(j), kk) - sign * vectors[j * d + k]));
      }
    }
  }
  ok = worst <= 1e-8;
  return "max deviation " + fmt("%.2e", worst);
}

std::string chamfer_check(bool& ok) {
  const PointCloud a = random_cloud(400, 41);
  const PointCloud b = random_cloud(350, 42);
  const double ab = chamfer_l1(a, b);
  ok = chamfer_l1(a, a) == 0.0 && ab == chamfer_l1(b, a) &&
       std::abs(ab - oracle::brute_chamfer(a.points, b.points)) <= 1e-12 && ab > 0.0;
  return "CD(a,a) = 0, CD(a,b) = CD(b,a) = " + fmt("%.6f", ab);
}

std::string checkpoint_check(bool& ok, const fs::path& work) {
  const pcn::PcnModel model(small_pcn());
  const fs::path path = work / "property_checkpoint.bin";
  model.save(path);
  const pcn::PcnModel back = pcn::PcnModel::load(path);
  ok = true;
  const auto names = model.parameter_names();
  const auto p = model.parameters();
  const auto q = back.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    ok = ok && std::equal(p[i].values().begin(), p[i].values().end(), q[i].values().begin(),
                          q[i].values().end());
  }
  const PointCloud x = random_cloud(256, 11);
  ok = ok && pcn::predict(model, x).dense.points == pcn::predict(back, x).dense.points;
  fs::remove(path);
  return std::to_string(names.size()) + " tensors";
}

void property_suite(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Check {
    const char* name;
    std::function<std::string(bool&)> run;
  };
  const std::vector<Check> checks = {
      {"finite differences", finite_difference_check},
      {"permutation invariance", permutation_check},
      {"k-NN oracle", knn_check},
      {"ICP recovery", icp_check},
      {"PCA oracle", pca_check},
      {"Chamfer identities", chamfer_check},
      {"checkpoint roundtrip", [&](bool& ok) { return checkpoint_check(ok, work); }},
  };
  bool all = true;
  std::string failed;
  for (const auto& c : checks) {
    bool ok = false;
    std::string detail;
    try {
      detail = c.run(ok);
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    std::printf("  %s %s: %s\n", ok ? "ok  " : "FAIL", c.name, detail.c_str());
    if (!ok) failed += std::string(failed.empty() ? "" : ", ") + c.name;
    all = all && ok;
  }
  const double secs = seconds_since(t0);
  all = all && secs <= 300.0;
  report(8, "property suites", all,
         (failed.empty() ? std::string("all 7 checks hold") : "failed: " + failed) + ", " +
             fmt("%.1f s", secs));
}

// ---- pipeline criteria ----------------------------------------------------

double test_coarse_cd(const json& split) { return split.at("coarse_cd").get<double>(); }

void ellipsoid_criteria(const app::RunConfig& config, const fs::path& dir, bool reuse) {
  const auto t0 = std::chrono::steady_clock::now();
  run_pipeline(config, dir, reuse);
  const double train_seconds = seconds_since(t0);
  const json metrics = app::read_json(dir / "metrics.json");
  const json analysis = app::read_json(dir / "ssm" / "analysis.json");
  const json& test = metrics.at("test");

  const auto compact = analysis.at("compactness").get<std::size_t>();
  const auto& fraction = analysis.at("variance_fraction");
  report(1, "ellipsoid compactness", compact == 2,
         "compactness " + std::to_string(compact) + ", first two modes " +
             fmt("%.4f", fraction.at(0).get<double>() + fraction.at(1).get<double>()) +
             " of variance" + (reuse ? "" : fmt(", pipeline %.0f s", train_seconds)));

  const double p2f = test.at("coarse_p2f").get<double>();
  report(2, "ellipsoid surface accuracy", p2f < 0.1, "mean test coarse P2F " + fmt("%.5f", p2f));

  const double cd = test.at("coarse_cd_x1000").get<double>();
  const double f1 = test.at("coarse_fscore").get<double>();
  report(3, "ellipsoid CD and F-score", cd <= 3.0 && f1 >= 0.4,
         fmt("test coarse CD x1000 %.3f (<= 3.0), ", cd) + fmt("F-score@1%% %.3f (>= 0.4)", f1));

  // Best one-to-one assignment of the first two modes to {rx, ry}, scored by
  // the weaker of its two correlations.
  auto pairing = [&](const json& corr) {
    const auto& rx = corr.at("rx");
    const auto& ry = corr.at("ry");
    auto r = [](const json& v, int k) { return std::abs(v.at(k).get<double>()); };
    const double direct = std::min(r(rx, 0), r(ry, 1));
    const double swapped = std::min(r(rx, 1), r(ry, 0));
    return std::pair{std::max(direct, swapped), swapped > direct};
  };
  const auto [weakest, swapped] = pairing(analysis.at("parameter_correlation").at("train"));
  const auto [weakest_all, swapped_all] = pairing(analysis.at("parameter_correlation").at("all"));
  (void)swapped_all;
  const auto& corr = analysis.at("parameter_correlation").at("train");
  const int mx = swapped ? 1 : 0, my = swapped ? 0 : 1;
  report(4, "mode semantics", weakest >= 0.9,
         "training shapes: mode" + std::to_string(mx + 1) + "~rx r=" +
             fmt("%.3f", corr.at("rx").at(mx).get<double>()) + ", mode" + std::to_string(my + 1) +
             "~ry r=" + fmt("%.3f", corr.at("ry").at(my).get<double>()) +
             fmt("; all 80 shapes weakest |r| %.3f", weakest_all));

  std::fprintf(stderr, "missingness ablation\n");
  const std::vector<double> fractions = {0.0, 0.5};
  const json partial =
      app::read_json(app::cmd_ablate_partial(config, dir / "checkpoint.bin", dir / "manifest.json",
                                             fractions, dir, quiet_logger()));
  const double cd0 = test_coarse_cd(partial.at("series").at(0).at("test"));
  const double cd50 = test_coarse_cd(partial.at("series").at(1).at("test"));
  report(6, "missingness trend", cd50 > cd0,
         fmt("test coarse CD x1000 %.3f at 0%% vs ", cd0 * 1000) + fmt("%.3f at 50%% missing", cd50 * 1000));

  std::fprintf(stderr, "training-size ablation\n");
  const std::vector<std::size_t> sizes = {10};
  const fs::path size_path = dir / "ablate_size.json";
  json sized;
  if (reuse && fs::exists(size_path)) {
    sized = app::read_json(size_path);
  } else {
    sized = app::read_json(app::cmd_ablate_size(config, dir / "manifest.json", sizes, dir, quiet_logger()));
  }
  const double cd10 = test_coarse_cd(sized.at("series").at(0).at("test"));
  const double cd_full = test.at("coarse_cd").get<double>();
  report(7, "training-size trend", cd10 > cd_full,
         fmt("test coarse CD x1000 %.3f with 10 shapes vs ", cd10 * 1000) +
             fmt("%.3f with 50", cd_full * 1000));
}

void group_criteria(app::RunConfig config, const fs::path& dir, bool reuse) {
  config.dataset.kind = app::DatasetKind::TwoGroup;
  // Rigid alignment to a single reference shifts one group against the other
  // (the bump pulls the fit), which adds a uniform offset to the difference
  // field. The generator frame is already shared, so use it directly.
  config.prepare.align = false;
  run_pipeline(config, dir, reuse);
  const Cohort cohort = read_cohort(dir / "manifest.json");
  const pcn::PcnModel model = pcn::PcnModel::load(dir / "checkpoint.bin");
  const app::SsmReport r = app::analyze_shapes(model, cohort, config.metrics);
  const ssm::Pdm all = ssm::concat(r.train_pdm, r.test_pdm);

  const TwoGroupParams& gp = config.dataset.two_group;
  const CohortFrame& frame = *cohort.frame;
  const Vec3 direction = gp.bump_center.normalized();
  Vec3 center = Vec3::Zero();
  std::size_t n_b = 0;
  Eigen::VectorXd mean_a = Eigen::VectorXd::Zero(all.rows.cols());
  std::size_t n_a = 0;
  std::vector<const ShapeSample*> samples;
  for (const auto& s : cohort.train) samples.push_back(&s);
  for (const auto& s : cohort.test) samples.push_back(&s);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ShapeSample& s = *samples[i];
    if (s.label == "B") {
      const Vec3 radii(s.params.at("rx"), s.params.at("ry"), s.params.at("rz"));
      center += frame.scale * frame.transform_for(s.id).apply(ellipsoid_point_along(radii, direction));
      ++n_b;
    } else {
      mean_a += all.rows.row(static_cast<Eigen::Index>(i)).transpose();
      ++n_a;
    }
  }
  center /= static_cast<double>(n_b);
  mean_a /= static_cast<double>(n_a);

  const auto& mag = r.group_difference->magnitude;
  std::vector<std::size_t> order(mag.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
  const std::size_t decile = (mag.size() + 9) / 10;
  const double radius = 2.0 * gp.bump_width * frame.scale;
  double farthest = 0.0;
  for (std::size_t k = 0; k < decile; ++k) {
    const auto c = static_cast<Eigen::Index>(3 * order[k]);
    const Vec3 p(mean_a(c), mean_a(c + 1), mean_a(c + 2));
    farthest = std::max(farthest, (p - center).norm());
  }
  const double accuracy = r.lda->accuracy;
  report(5, "group characterization", farthest <= radius && accuracy >= 0.9,
         "top " + std::to_string(decile) + " magnitudes within " + fmt("%.3f of the bump center (limit %.3f), ", farthest, radius) +
             fmt("LDA accuracy %.3f", accuracy));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "pcnssm_acceptance";
  fs::path config_path = PCNSSM_DESK_CONFIG;
  std::optional<std::size_t> epochs;
  bool reuse = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto value = [&]() -> std::string {
      if (i + 1 >= argc) throw ContractError(a + " needs a value");
      return argv[++i];
    };
    if (a == "--work") work = value();
    else if (a == "--config") config_path = value();
    else if (a == "--epochs") epochs = std::stoul(value());
    else if (a == "--reuse") reuse = true;
    else {
      std::fprintf(stderr, "unknown argument %s\n", a.c_str());
      return 2;
    }
  }
  fs::create_directories(work);
  app::RunConfig config = app::load_run_config(config_path);
  if (epochs) config.pcn.max_epochs = *epochs;
  std::printf("acceptance: config %s, max_epochs %zu, work %s\n", config_path.string().c_str(),
              config.pcn.max_epochs, work.string().c_str());

  const auto t0 = std::chrono::steady_clock::now();
  try {
    property_suite(work);
    ellipsoid_criteria(config, work / "ellipsoids", reuse);
    group_criteria(config, work / "two_group", reuse);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  std::size_t passed = 0;
  std::printf("\nsummary (%.0f s):\n", seconds_since(t0));
  for (const auto& o : outcomes) {
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", o.id, o.name.c_str(), o.detail.c_str());
    passed += o.pass ? 1 : 0;
  }
  std::printf("%zu/%zu criteria pass\n", passed, outcomes.size());
  return passed == outcomes.size() ? 0 : 1;
}
