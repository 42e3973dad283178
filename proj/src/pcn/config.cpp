#include "pcnssm/pcn/config.hpp"

#include "pcnssm/error.hpp"

namespace pcnssm::pcn {

double AlphaSchedule::at(std::size_t epoch) const {
  if (mode == AlphaMode::Constant || stages.empty()) return value;
  double a = stages.front().second;
  for (const auto& [first, alpha] : stages) {
    if (epoch >= first) a = alpha;
  }
  return a;
}

void PcnConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("PcnConfig: " + what); };
  if (input_size == 0) fail("input_size must be positive");
  if (coarse_size == 0 || grid_side == 0) fail("coarse_size and grid_side must be positive");
  if (dense_size != coarse_size * grid_side * grid_side) {
    fail("dense_size " + std::to_string(dense_size) + " != coarse_size * grid_side^2 = " +
         std::to_string(coarse_size * grid_side * grid_side));
  }
  auto widths = [&](const std::vector<std::size_t>& w, const char* name) {
    if (w.empty()) fail(std::string(name) + " has no layers");
    for (std::size_t x : w) {
      if (x == 0) fail(std::string(name) + " widths must be positive");
    }
  };
  widths(encoder1, "encoder1");
  widths(encoder2, "encoder2");
  widths(decoder, "decoder");
  widths(folding, "folding");
  if (encoder2.back() != latent_dim) fail("encoder2 must end at latent_dim");
  if (decoder.back() != coarse_size * 3) fail("decoder must end at coarse_size * 3");
  if (folding.back() != 3) fail("folding must end at 3");
  if (!(grid_scale >= 0.0)) fail("grid_scale must be >= 0");
  if (alpha.value < 0.0) fail("alpha must be >= 0");
  for (const auto& [first, a] : alpha.stages) {
    if (a < 0.0) fail("alpha stages must be >= 0");
  }
  if (batch_size == 0) fail("batch_size must be positive");
  if (max_epochs == 0) fail("max_epochs must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
}

nlohmann::json to_json(const PcnConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& [first, a] : c.alpha.stages) stages.push_back({first, a});
  return {{"input_size", c.input_size},
          {"coarse_size", c.coarse_size},
          {"dense_size", c.dense_size},
          {"grid_side", c.grid_side},
          {"grid_scale", c.grid_scale},
          {"latent_dim", c.latent_dim},
          {"encoder1", c.encoder1},
          {"encoder2", c.encoder2},
          {"decoder", c.decoder},
          {"folding", c.folding},
          {"alpha",
           {{"mode", c.alpha.mode == AlphaMode::Constant ? "constant" : "staged"},
            {"value", c.alpha.value},
            {"stages", stages}}},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"min_rel_improvement", c.min_rel_improvement},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed}};
}

PcnConfig config_from_json(const nlohmann::json& j) {
  PcnConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("input_size", c.input_size);
  get("coarse_size", c.coarse_size);
  get("grid_side", c.grid_side);
  c.dense_size = c.coarse_size * c.grid_side * c.grid_side;
  get("dense_size", c.dense_size);
  get("grid_scale", c.grid_scale);
  get("latent_dim", c.latent_dim);
  get("encoder1", c.encoder1);
  c.encoder2.back() = c.latent_dim;
  get("encoder2", c.encoder2);
  c.decoder.back() = c.coarse_size * 3;
  get("decoder", c.decoder);
  get("folding", c.folding);
  if (j.contains("alpha")) {
    const auto& a = j.at("alpha");
    if (a.is_number()) {
      c.alpha.value = a.get<double>();
    } else {
      const std::string mode = a.value("mode", "constant");
      if (mode == "constant") c.alpha.mode = AlphaMode::Constant;
      else if (mode == "staged") c.alpha.mode = AlphaMode::Staged;
      else throw ContractError("PcnConfig: unknown alpha mode '" + mode + "'");
      c.alpha.value = a.value("value", c.alpha.value);
      if (a.contains("stages")) {
        c.alpha.stages.clear();
        for (const auto& s : a.at("stages")) {
          c.alpha.stages.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<double>());
        }
      }
    }
  }
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("min_rel_improvement", c.min_rel_improvement);
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("seed", c.seed);
  c.validate();
  return c;
}

}  // namespace pcnssm::pcn
