#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcnssm/datasets/datasets.hpp"
#include "pcnssm/pcn/model.hpp"

namespace pcnssm::pcn {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double coarse_cd = 0.0;
  double dense_cd = 0.0;
  double loss = 0.0;
  double alpha = 0.0;
  double seconds = 0.0;  // wall time of the epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_coarse_cd = 0.0;
  std::string stop_reason;
};

// True when every numerical field except wall time matches bit for bit.
bool same_trajectory(const TrainHistory& a, const TrainHistory& b);

struct TrainOptions {
  // When set, the best model and its optimizer state are written here.
  std::optional<std::filesystem::path> checkpoint;
  // Starts from these weights instead of a fresh initialization.
  const PcnModel* initial = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  PcnModel model;  // parameters of the best epoch
  TrainHistory history;
};

// Mini-batch Adam on the coarse + alpha * dense Chamfer loss. An epoch's CD
// is the sample-weighted mean over its batches.
TrainResult train(std::span<const ShapeSample> samples, const PcnConfig& config,
                  const TrainOptions& options = {});

// Columns epoch, coarse_cd, dense_cd, loss, alpha and, optionally, seconds.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history,
                       bool include_seconds = true);

}  // namespace pcnssm::pcn
