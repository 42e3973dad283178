#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pcnssm/autodiff/checkpoint.hpp"
#include "pcnssm/autodiff/tensor.hpp"
#include "pcnssm/geometry/types.hpp"
#include "pcnssm/pcn/config.hpp"

namespace pcnssm::pcn {

struct Dense {
  ad::Tensor w;
  ad::Tensor b;
};

// Coarse-to-fine completion network. Every "concat, then linear" in the
// architecture is evaluated as a sum of per-part linears, so the weight of
// such a layer is stored as one block per concatenated part.
class PcnModel {
 public:
  explicit PcnModel(PcnConfig config);

  PcnModel(PcnModel&&) = default;
  PcnModel& operator=(PcnModel&&) = default;
  // Deep copy; plain copies would alias the parameter storage.
  PcnModel clone() const;

  const PcnConfig& config() const { return config_; }

  // [B, N, 3] -> [B, latent_dim]
  ad::Tensor encode(ad::Graph& g, const ad::Tensor& x) const;
  // [B, latent_dim] -> [B, M, 3]
  ad::Tensor decode_coarse(ad::Graph& g, const ad::Tensor& feature) const;
  // ([B, M, 3], [B, latent_dim]) -> [B, M * grid_side^2, 3]. Dense index
  // j * grid_side^2 + k is grid cell k around coarse point j.
  ad::Tensor refine(ad::Graph& g, const ad::Tensor& coarse, const ad::Tensor& feature) const;

  struct Output {
    ad::Tensor feature;
    ad::Tensor coarse;
    ad::Tensor dense;
  };
  Output forward(ad::Graph& g, const ad::Tensor& x) const;

  // Stable order, shared by the optimizer state and the checkpoint.
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::vector<ad::Tensor> parameters() const;
  std::size_t parameter_count() const;

  ad::Checkpoint to_checkpoint() const;
  static PcnModel from_checkpoint(const ad::Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static PcnModel load(const std::filesystem::path& path);

  // Copies parameter values from `other`, which must share the config.
  void assign_from(const PcnModel& other);

 private:
  void init_parameters();
  ad::Tensor param(const std::string& name, ad::Shape shape);

  PcnConfig config_;
  std::vector<std::string> names_;
  std::vector<ad::Tensor> params_;
  std::vector<Dense> enc1_, enc2_, dec_, fold_;
  // Split first layers of encoder stage 2 and of the folding MLP.
  ad::Tensor enc2_global_w_;
  ad::Tensor fold_grid_w_, fold_point_w_;
  ad::Tensor grid_;  // [grid_side^2, 2], constant
};

// Packs equally sized clouds into a [B, N, 3] tensor.
ad::Tensor batch_tensor(std::span<const PointCloud* const> clouds);
ad::Tensor batch_tensor(const PointCloud& cloud);

struct Prediction {
  PointCloud coarse;
  PointCloud dense;
  std::vector<double> feature;
};
// Pure forward pass; accepts any input size >= 1.
Prediction predict(const PcnModel& model, const PointCloud& input);

}  // namespace pcnssm::pcn
