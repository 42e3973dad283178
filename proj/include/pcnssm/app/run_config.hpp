#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "pcnssm/datasets/datasets.hpp"
#include "pcnssm/pcn/config.hpp"

namespace pcnssm::app {

enum class DatasetKind { Ellipsoids, TwoGroup, Directory };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Ellipsoids;
  EllipsoidParams ellipsoids;
  TwoGroupParams two_group;
  std::filesystem::path directory;  // Directory kind only
  double test_fraction = 0.1;       // Directory kind only
  std::uint64_t split_seed = 0;
};

struct MetricSettings {
  double fscore_threshold = 0.01;  // 1% of the [-1, 1] frame
  std::size_t uniformity_k = 6;
  double pca_threshold = 0.99;
  std::size_t specificity_samples = 1000;
  std::uint64_t specificity_seed = 0;
  std::size_t export_modes = 3;
  double mode_sigmas = 2.0;
  std::uint64_t partial_seed = 0;
};

struct RunConfig {
  DatasetSpec dataset;
  PrepareOptions prepare;
  pcn::PcnConfig pcn;
  MetricSettings metrics;
  std::filesystem::path output = "run";

  // Derives every component seed from one master seed.
  void apply_seed(std::uint64_t master);
};

nlohmann::json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown top-level keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace pcnssm::app
