#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "pcnssm/autodiff/adam.hpp"
#include "pcnssm/autodiff/tensor.hpp"

namespace pcnssm::ad {

// Named arrays plus optional optimizer state. Values are stored as raw
// little-endian IEEE doubles so a save/load roundtrip is bit-exact.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::optional<AdamState> optimizer;
  std::string metadata;  // free-form, e.g. the model config as JSON
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pcnssm::ad
