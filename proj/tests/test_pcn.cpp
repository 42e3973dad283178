#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "pcnssm/autodiff/ops.hpp"
#include "pcnssm/datasets/datasets.hpp"
#include "pcnssm/error.hpp"
#include "pcnssm/geometry/metrics.hpp"
#include "pcnssm/pcn/loss.hpp"
#include "pcnssm/pcn/trainer.hpp"
#include "pcnssm/random.hpp"
#include "support/oracles.hpp"

using namespace pcnssm;
using namespace pcnssm::pcn;

namespace {

PcnConfig tiny_config() {
  PcnConfig c;
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

PcnConfig small_config() {
  PcnConfig c;
  c.input_size = 256;
  c.coarse_size = 64;
  c.dense_size = 256;
  c.latent_dim = 64;
  c.encoder1 = {32, 64};
  c.encoder2 = {64, 64};
  c.decoder = {128, 192};
  c.folding = {32, 32, 3};
  c.learning_rate = 1e-3;
  c.batch_size = 2;
  c.seed = 5;
  return c;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(rng.normal(), rng.normal(), rng.normal());
  return c;
}

PointCloud permuted(const PointCloud& c, std::uint64_t seed) {
  std::vector<std::size_t> idx(c.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  PointCloud out;
  for (std::size_t i : idx) out.points.push_back(c.points[i]);
  return out;
}

std::vector<ShapeSample> ellipsoid_samples(std::size_t count, std::size_t input_size,
                                           std::size_t gt_size, std::uint64_t seed) {
  std::vector<ShapeSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    ShapeSample s;
    s.id = "s" + std::to_string(i);
    const Vec3 r(rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4), 1.0);
    s.ground_truth = sample_ellipsoid(r, gt_size, rng.next());
    out.push_back(prepare_input(std::move(s), input_size, rng.next()));
  }
  return out;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pcnssm_pcn_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config defaults, validation and JSON") {
  PcnConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.dense_size == c.coarse_size * c.grid_side * c.grid_side);
  CHECK(c.latent_dim == 1024);
  CHECK(c.decoder.back() == 1536);
  CHECK(c.alpha.at(1) == 1.0);
  CHECK(c.patience == 50);
  CHECK(c.max_epochs == 2000);
  CHECK(c.batch_size == 8);
  const PcnConfig back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  PcnConfig bad = c;
  bad.dense_size = 2000;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = c;
  bad.folding = {512, 0, 3};
  CHECK_THROWS_AS(bad.validate(), ContractError);

  const PcnConfig derived = config_from_json({{"coarse_size", 16}, {"latent_dim", 32}});
  CHECK(derived.dense_size == 64);
  CHECK(derived.decoder.back() == 48);
  CHECK(derived.encoder2.back() == 32);

  AlphaSchedule staged;
  staged.mode = AlphaMode::Staged;
  CHECK(staged.at(1) == 0.01);
  CHECK(staged.at(49) == 0.01);
  CHECK(staged.at(50) == 0.1);
  CHECK(staged.at(150) == 0.5);
  CHECK(staged.at(5000) == 1.0);
}

TEST_CASE("default architecture sizes") {
  const PcnModel model{PcnConfig{}};
  const PointCloud x = random_cloud(2048, 1);
  const auto p = predict(model, x);
  CHECK(p.feature.size() == 1024);
  CHECK(p.coarse.size() == 512);
  CHECK(p.dense.size() == 2048);
  const auto partial = predict(model, make_partial(x, 0.5, 2));
  CHECK(partial.coarse.size() == 512);
  CHECK(partial.dense.size() == 2048);
  CHECK_THROWS_AS(predict(model, PointCloud{}), EmptySetError);
}

TEST_CASE("encoder and predictions are permutation invariant") {
  const PcnModel model(small_config());
  const PointCloud x = random_cloud(256, 7);
  const auto a = predict(model, x);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto b = predict(model, permuted(x, seed));
    CHECK(a.feature == b.feature);
    CHECK(a.coarse.points == b.coarse.points);
    CHECK(a.dense.points == b.dense.points);
  }
  PointCloud doubled = x;
  doubled.points.insert(doubled.points.end(), x.points.begin(), x.points.end());
  CHECK(predict(model, doubled).feature == a.feature);
  // Same feature, same decoder output.
  CHECK(predict(model, x).coarse.points == a.coarse.points);
}

TEST_CASE("fresh refinement reproduces the tiled coarse cloud") {
  const PcnModel model(small_config());
  const auto p = predict(model, random_cloud(256, 2));
  REQUIRE(p.dense.size() == 4 * p.coarse.size());
  for (std::size_t j = 0; j < p.coarse.size(); ++j) {
    for (std::size_t k = 0; k < 4; ++k) CHECK(p.dense.points[j * 4 + k] == p.coarse.points[j]);
  }
}

TEST_CASE("completion loss examples") {
  const std::vector<Vec3> gt = {{0, 0, 0}, {1, 0, 0}};
  CHECK(completion_loss(gt, gt, gt, 1.0).total == 0.0);
  const std::vector<Vec3> coarse = {{0, 1, 0}, {1, 0, 0}};
  const std::vector<Vec3> dense = {{0, 0, 2}, {1, 0, 0}};
  // coarse: 0.5 * ((1 + 0)/2 + (1 + 0)/2) = 0.5
  // dense:  0.5 * ((2 + 0)/2 + (1 + 0)/2) = 0.75, (0,0,0) is nearest (1,0,0)
  const auto t0 = completion_loss(coarse, dense, gt, 0.0);
  CHECK(t0.total == doctest::Approx(0.5).epsilon(1e-15));
  const auto t1 = completion_loss(coarse, dense, gt, 1.0);
  CHECK(t1.coarse == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t1.dense == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(t1.total == doctest::Approx(1.25).epsilon(1e-15));
  CHECK_THROWS_AS(completion_loss(coarse, dense, gt, -1.0), ContractError);

  // Graph op matches the batch mean of the value function.
  ad::Graph g(false);
  const auto pred = ad::Tensor::from({2, 2, 3}, {0, 1, 0, 1, 0, 0, 0, 0, 2, 1, 0, 0});
  const std::vector<ChamferTarget> targets = {{gt, nullptr}, {gt, nullptr}};
  CHECK(chamfer_loss(g, pred, targets).item() == doctest::Approx(0.625).epsilon(1e-15));
}

TEST_CASE("full network gradient matches finite differences") {
  PcnModel model(tiny_config());
  auto params = model.parameters();
  // Give the zero-initialized output layer weights so that every parameter
  // carries gradient.
  Rng rng(9);
  for (auto& p : params) {
    for (double& v : p.mutable_values()) {
      if (v == 0.0) v = rng.uniform(-0.3, 0.3);
    }
  }
  const PointCloud x = random_cloud(32, 4);
  const PointCloud gt = random_cloud(40, 5);
  const KdTree tree(gt.points);
  const std::vector<ChamferTarget> targets = {{gt.points, &tree}};
  const double alpha = 0.7;
  auto loss_of = [&](ad::Graph& g) {
    const auto out = model.forward(g, batch_tensor(x));
    return ad::add(g, chamfer_loss(g, out.coarse, targets),
                   ad::scale(g, chamfer_loss(g, out.dense, targets), alpha));
  };
  ad::Graph g;
  ad::Tensor loss = loss_of(g);
  g.backward(loss);

  const double h = 1e-6;
  std::size_t checked = 0, kinks = 0, bad = 0;
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
      // A matching or max switch inside the stencil shows up as unequal
      // one-sided slopes; those entries are not differentiable there.
      if (std::abs((up - mid) - (mid - down)) > 1e-9 * std::max(1.0, std::abs(mid))) {
        ++kinks;
        continue;
      }
      ++checked;
      const double fd = (up - down) / (2 * h);
      const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
      if (oracle::relative_error(analytic, fd, 1e-5) >= 1e-4) {
        ++bad;
        MESSAGE("param entry " << i << " analytic " << analytic << " fd " << fd);
      }
    }
  }
  CHECK(bad == 0);
  CHECK(kinks * 100 < checked);
  CHECK(checked > 1000);
}

TEST_CASE("single shape overfits") {
  PcnConfig c = small_config();
  c.max_epochs = 300;
  c.patience = 300;
  c.batch_size = 1;
  ShapeSample s;
  s.id = "one";
  s.ground_truth = sample_ellipsoid(Vec3(1.2, 0.7, 1.0), 256, 1);
  s = prepare_input(std::move(s), 256, 2);
  s.ground_truth = PointCloud(std::vector<Vec3>(s.ground_truth.points.begin(),
                                                s.ground_truth.points.begin() + 64));
  const std::vector<ShapeSample> cohort = {s};
  const auto result = train(cohort, c);
  const auto& h = result.history;
  REQUIRE(!h.epochs.empty());
  const double initial = h.epochs.front().coarse_cd;
  const auto p = predict(result.model, s.input);
  const double final_cd = chamfer_l1(p.coarse, s.ground_truth);
  MESSAGE("initial " << initial << " best " << h.best_coarse_cd << " final " << final_cd);
  CHECK(final_cd < 0.1 * initial);
  CHECK(h.best_coarse_cd <= initial);
}

TEST_CASE("training is deterministic and returns the best epoch") {
  PcnConfig c = small_config();
  c.max_epochs = 6;
  const auto samples = ellipsoid_samples(5, 256, 400, 3);
  const auto dir = scratch("train");
  TrainOptions options;
  options.checkpoint = dir / "best.ckpt";
  std::size_t callbacks = 0;
  options.on_epoch = [&](const EpochRecord&) { ++callbacks; };
  const auto a = train(samples, c, options);
  const auto b = train(samples, c);
  CHECK(callbacks == 6);
  CHECK(same_trajectory(a.history, b.history));
  const auto pa = a.model.parameters();
  const auto pb = b.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::equal(pa[i].values().begin(), pa[i].values().end(), pb[i].values().begin()));
  }
  for (std::size_t i = 1; i < a.history.epochs.size(); ++i) {
    CHECK(a.history.epochs[i].epoch == a.history.epochs[i - 1].epoch + 1);
  }
  const auto& first = a.history.epochs.front();
  const auto& best = a.history.epochs[a.history.best_epoch - 1];
  CHECK(best.coarse_cd <= first.coarse_cd);
  CHECK(best.coarse_cd == a.history.best_coarse_cd);
  CHECK(first.alpha == 1.0);
  CHECK(first.loss == doctest::Approx(first.coarse_cd + first.dense_cd).epsilon(1e-12));

  // The on-disk best checkpoint carries the same weights plus Adam state.
  const auto ckpt = ad::load_checkpoint(dir / "best.ckpt");
  CHECK(ckpt.optimizer.has_value());
  const PcnModel restored = PcnModel::from_checkpoint(ckpt);
  const auto x = samples[0].input;
  CHECK(predict(restored, x).dense.points == predict(a.model, x).dense.points);

  write_history_csv(dir / "history.csv", a.history);
  std::ifstream csv(dir / "history.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,coarse_cd,dense_cd,loss,alpha,seconds");

  PcnConfig different = c;
  different.seed = 6;
  CHECK_FALSE(same_trajectory(train(samples, different).history, a.history));
}

TEST_CASE("checkpoint roundtrip is bit-exact") {
  const PcnModel model(small_config());
  const auto dir = scratch("ckpt");
  model.save(dir / "m.ckpt");
  const PcnModel back = PcnModel::load(dir / "m.ckpt");
  CHECK(to_json(back.config()) == to_json(model.config()));
  const PointCloud x = random_cloud(256, 11);
  const auto a = predict(model, x);
  const auto b = predict(back, x);
  CHECK(a.coarse.points == b.coarse.points);
  CHECK(a.dense.points == b.dense.points);

  const PcnModel copy = model.clone();
  copy.parameters()[0].mutable_values()[0] += 1.0;
  CHECK(model.parameters()[0].values()[0] != copy.parameters()[0].values()[0]);

  ad::Checkpoint broken = model.to_checkpoint();
  broken.tensors.erase(model.parameter_names()[2]);
  CHECK_THROWS_AS(PcnModel::from_checkpoint(broken), IoError);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  PcnModel start(small_config());
  start.parameters()[0].mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainOptions options;
  options.initial = &start;
  const auto samples = ellipsoid_samples(2, 256, 300, 1);
  try {
    train(samples, small_config(), options);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1") != std::string::npos);
    CHECK(what.find("batch 0") != std::string::npos);
    CHECK(what.find("enc1.0.w=") != std::string::npos);
  }
  CHECK_THROWS_AS(train({}, small_config()), ContractError);
}
