#include "pcnssm/pcn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pcnssm/autodiff/adam.hpp"
#include "pcnssm/autodiff/ops.hpp"
#include "pcnssm/error.hpp"
#include "pcnssm/pcn/loss.hpp"
#include "pcnssm/random.hpp"

namespace pcnssm::pcn {

namespace {

std::string parameter_norms(const PcnModel& model) {
  std::ostringstream out;
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    double s = 0.0;
    for (double v : params[i].values()) s += v * v;
    out << (i ? ", " : "") << model.parameter_names()[i] << "=" << std::sqrt(s);
  }
  return out.str();
}

}  // namespace

bool same_trajectory(const TrainHistory& a, const TrainHistory& b) {
  if (a.epochs.size() != b.epochs.size() || a.best_epoch != b.best_epoch ||
      a.best_coarse_cd != b.best_coarse_cd || a.stop_reason != b.stop_reason) {
    return false;
  }
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const auto& x = a.epochs[i];
    const auto& y = b.epochs[i];
    if (x.epoch != y.epoch || x.coarse_cd != y.coarse_cd || x.dense_cd != y.dense_cd ||
        x.loss != y.loss || x.alpha != y.alpha) {
      return false;
    }
  }
  return true;
}

TrainResult train(std::span<const ShapeSample> samples, const PcnConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (samples.empty()) throw ContractError("train: empty training set");
  for (const ShapeSample& s : samples) {
    if (s.input.empty()) throw ContractError("train: shape '" + s.id + "' has no input cloud");
    if (s.ground_truth.empty()) throw ContractError("train: shape '" + s.id + "' has no ground truth");
  }

  PcnModel model(config);
  if (options.initial) model.assign_from(*options.initial);
  PcnModel best = model.clone();
  std::vector<ad::Tensor> params = model.parameters();
  ad::AdamState adam(ad::AdamHyper{config.learning_rate});
  ad::AdamState best_adam = adam;

  std::vector<KdTree> trees;
  trees.reserve(samples.size());
  for (const ShapeSample& s : samples) trees.emplace_back(s.ground_truth.points);

  TrainHistory history;
  double best_cd = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(samples.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, epoch));
    rng.shuffle(order);
    const double alpha = config.alpha.at(epoch);

    double sum_coarse = 0.0, sum_dense = 0.0, sum_loss = 0.0;
    for (std::size_t begin = 0, batch_index = 0; begin < order.size();
         begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const PointCloud*> inputs;
      std::vector<ChamferTarget> targets;
      for (std::size_t i = begin; i < end; ++i) {
        inputs.push_back(&samples[order[i]].input);
        targets.push_back({samples[order[i]].ground_truth.points, &trees[order[i]]});
      }
      ad::Graph g;
      const auto out = model.forward(g, batch_tensor(inputs));
      const ad::Tensor coarse_cd = chamfer_loss(g, out.coarse, targets);
      const ad::Tensor dense_cd = chamfer_loss(g, out.dense, targets);
      ad::Tensor loss = ad::add(g, coarse_cd, ad::scale(g, dense_cd, alpha));
      if (!std::isfinite(loss.item())) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index) +
                             "; parameter norms: " + parameter_norms(model));
      }
      for (const ad::Tensor& p : params) p.zero_grad();
      g.backward(loss);
      ad::adam_step(params, adam);

      const double count = static_cast<double>(end - begin);
      sum_coarse += count * coarse_cd.item();
      sum_dense += count * dense_cd.item();
      sum_loss += count * loss.item();
    }

    const double n = static_cast<double>(samples.size());
    EpochRecord record;
    record.epoch = epoch;
    record.coarse_cd = sum_coarse / n;
    record.dense_cd = sum_dense / n;
    record.loss = sum_loss / n;
    record.alpha = alpha;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);

    if (record.coarse_cd < best_cd * (1.0 - config.min_rel_improvement)) {
      best_cd = record.coarse_cd;
      history.best_epoch = epoch;
      history.best_coarse_cd = best_cd;
      best.assign_from(model);
      best_adam = adam;
      stale = 0;
      if (options.checkpoint) {
        ad::Checkpoint ckpt = best.to_checkpoint();
        ckpt.optimizer = best_adam;
        ad::save_checkpoint(*options.checkpoint, ckpt);
      }
    } else if (++stale >= config.patience) {
      history.stop_reason = "converged";
      break;
    }
  }
  if (history.stop_reason.empty()) history.stop_reason = "max_epochs";
  return {std::move(best), std::move(history)};
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history,
                       bool include_seconds) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  std::FILE* f = std::fopen(tmp.string().c_str(), "w");
  if (!f) throw IoError("cannot write " + tmp.string());
  std::fprintf(f, include_seconds ? "epoch,coarse_cd,dense_cd,loss,alpha,seconds\n"
                                   : "epoch,coarse_cd,dense_cd,loss,alpha\n");
  for (const EpochRecord& r : history.epochs) {
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.17g", r.epoch, r.coarse_cd, r.dense_cd, r.loss,
                 r.alpha);
    if (include_seconds) std::fprintf(f, ",%.6f", r.seconds);
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw IoError("failed writing " + tmp.string());
  std::filesystem::rename(tmp, path);
}

}  // namespace pcnssm::pcn
