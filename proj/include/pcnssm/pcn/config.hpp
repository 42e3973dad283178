#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace pcnssm::pcn {

enum class AlphaMode { Constant, Staged };

struct AlphaSchedule {
  AlphaMode mode = AlphaMode::Constant;
  double value = 1.0;
  // (first epoch, alpha) pairs in increasing epoch order; Staged mode only.
  std::vector<std::pair<std::size_t, double>> stages{{1, 0.01}, {50, 0.1}, {100, 0.5}, {200, 1.0}};

  double at(std::size_t epoch) const;
};

struct PcnConfig {
  std::size_t input_size = 2048;
  std::size_t coarse_size = 512;
  std::size_t dense_size = 2048;
  std::size_t grid_side = 2;
  double grid_scale = 0.05;  // grid offsets span [-grid_scale, grid_scale]^2
  std::size_t latent_dim = 1024;
  std::vector<std::size_t> encoder1{128, 256};
  std::vector<std::size_t> encoder2{512, 1024};
  std::vector<std::size_t> decoder{1024, 1024, 512 * 3};
  std::vector<std::size_t> folding{512, 512, 3};

  AlphaSchedule alpha;
  std::size_t max_epochs = 2000;
  std::size_t patience = 50;
  double min_rel_improvement = 1e-4;
  std::size_t batch_size = 8;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;

  // Throws ContractError naming the first inconsistent field.
  void validate() const;
};

nlohmann::json to_json(const PcnConfig& config);
// Missing keys keep their defaults. Decoder and folding output widths follow
// coarse_size unless given explicitly.
PcnConfig config_from_json(const nlohmann::json& j);

}  // namespace pcnssm::pcn
