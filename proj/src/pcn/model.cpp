#include "pcnssm/pcn/model.hpp"

#include <cmath>

#include "pcnssm/autodiff/ops.hpp"
#include "pcnssm/error.hpp"
#include "pcnssm/random.hpp"

namespace pcnssm::pcn {

using ad::Graph;
using ad::Tensor;

namespace {

Tensor mlp(Graph& g, Tensor h, std::span<const Dense> layers, std::size_t first) {
  for (std::size_t i = first; i < layers.size(); ++i) {
    if (i > 0) h = ad::relu(g, h);
    h = ad::linear(g, h, layers[i].w, layers[i].b);
  }
  return h;
}

void fill_uniform(Tensor& t, Rng& rng, double bound) {
  for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
}

}  // namespace

PcnModel::PcnModel(PcnConfig config) : config_(std::move(config)) {
  config_.validate();
  const PcnConfig& c = config_;
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    return Dense{param(prefix + ".w", {in, out}), param(prefix + ".b", {out})};
  };

  std::size_t width = 3;
  for (std::size_t i = 0; i < c.encoder1.size(); ++i) {
    enc1_.push_back(dense("enc1." + std::to_string(i), width, c.encoder1[i]));
    width = c.encoder1[i];
  }
  const std::size_t global_width = width;
  enc2_.push_back({param("enc2.0.w_local", {width, c.encoder2[0]}), param("enc2.0.b", {c.encoder2[0]})});
  enc2_global_w_ = param("enc2.0.w_global", {global_width, c.encoder2[0]});
  width = c.encoder2[0];
  for (std::size_t i = 1; i < c.encoder2.size(); ++i) {
    enc2_.push_back(dense("enc2." + std::to_string(i), width, c.encoder2[i]));
    width = c.encoder2[i];
  }

  width = c.latent_dim;
  for (std::size_t i = 0; i < c.decoder.size(); ++i) {
    dec_.push_back(dense("dec." + std::to_string(i), width, c.decoder[i]));
    width = c.decoder[i];
  }

  fold_grid_w_ = param("fold.0.w_grid", {2, c.folding[0]});
  fold_point_w_ = param("fold.0.w_point", {3, c.folding[0]});
  fold_.push_back({param("fold.0.w_feature", {c.latent_dim, c.folding[0]}), param("fold.0.b", {c.folding[0]})});
  width = c.folding[0];
  for (std::size_t i = 1; i < c.folding.size(); ++i) {
    fold_.push_back(dense("fold." + std::to_string(i), width, c.folding[i]));
    width = c.folding[i];
  }

  const std::size_t side = c.grid_side;
  grid_ = Tensor::zeros({side * side, 2});
  auto grid = grid_.mutable_values();
  auto coord = [&](std::size_t i) {
    return side == 1 ? 0.0
                     : -c.grid_scale + 2.0 * c.grid_scale * static_cast<double>(i) /
                                           static_cast<double>(side - 1);
  };
  for (std::size_t ix = 0; ix < side; ++ix) {
    for (std::size_t iy = 0; iy < side; ++iy) {
      grid[(ix * side + iy) * 2] = coord(ix);
      grid[(ix * side + iy) * 2 + 1] = coord(iy);
    }
  }
  init_parameters();
}

Tensor PcnModel::param(const std::string& name, ad::Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  names_.push_back(name);
  params_.push_back(t);
  return t;
}

void PcnModel::init_parameters() {
  // Kaiming-style uniform fan-in scaling. Layers feeding a ReLU use the ReLU
  // gain; output layers use unit gain. Biases start at zero.
  Rng rng(config_.seed);
  auto init = [&](std::span<Dense> layers, std::size_t extra_fan_in, bool relu_after_last) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::size_t fan_in = layers[i].w.dim(0) + (i == 0 ? extra_fan_in : 0);
      const bool relu = i + 1 < layers.size() || relu_after_last;
      fill_uniform(layers[i].w, rng, std::sqrt((relu ? 6.0 : 3.0) / static_cast<double>(fan_in)));
    }
  };
  init(enc1_, 0, false);
  init(enc2_, enc2_global_w_.dim(0), false);
  {
    const std::size_t fan_in = enc2_[0].w.dim(0) + enc2_global_w_.dim(0);
    const bool relu = enc2_.size() > 1;
    fill_uniform(enc2_global_w_, rng, std::sqrt((relu ? 6.0 : 3.0) / static_cast<double>(fan_in)));
  }
  init(dec_, 0, false);
  init(fold_, 5, false);
  {
    const std::size_t fan_in = fold_[0].w.dim(0) + 5;
    const bool relu = fold_.size() > 1;
    const double bound = std::sqrt((relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
    fill_uniform(fold_grid_w_, rng, bound);
    fill_uniform(fold_point_w_, rng, bound);
  }
  // Refinement starts out as the tiled coarse cloud.
  for (double& v : fold_.back().w.mutable_values()) v = 0.0;
  if (fold_.size() == 1) {
    for (double& v : fold_grid_w_.mutable_values()) v = 0.0;
    for (double& v : fold_point_w_.mutable_values()) v = 0.0;
  }
}

PcnModel PcnModel::clone() const {
  PcnModel copy(config_);
  copy.assign_from(*this);
  return copy;
}

void PcnModel::assign_from(const PcnModel& other) {
  if (other.names_ != names_) throw ContractError("PcnModel::assign_from: architectures differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].shape() != other.params_[i].shape()) {
      throw DimensionError("PcnModel::assign_from: shape mismatch for " + names_[i]);
    }
    auto src = other.params_[i].values();
    std::copy(src.begin(), src.end(), params_[i].mutable_values().begin());
  }
}

Tensor PcnModel::encode(Graph& g, const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != 3) {
    throw DimensionError("encode: expected [B,N,3], got " + ad::to_string(x.shape()));
  }
  if (x.dim(1) == 0) throw EmptySetError("encode: empty point cloud");
  const std::size_t n = x.dim(1);
  const Tensor point_features = mlp(g, x, enc1_, 0);
  const Tensor global = ad::max_over_set(g, point_features);
  // linear(concat(f_i, g)) = linear(f_i) + linear(g)
  Tensor h = ad::linear(g, point_features, enc2_[0].w, enc2_[0].b);
  h = ad::add(g, h, ad::tile(g, ad::linear(g, global, enc2_global_w_, Tensor()), n));
  h = mlp(g, h, enc2_, 1);
  return ad::max_over_set(g, h);
}

Tensor PcnModel::decode_coarse(Graph& g, const Tensor& feature) const {
  const Tensor flat = mlp(g, feature, dec_, 0);
  return ad::reshape(g, flat, {feature.dim(0), config_.coarse_size, 3});
}

Tensor PcnModel::refine(Graph& g, const Tensor& coarse, const Tensor& feature) const {
  const std::size_t batch = coarse.dim(0);
  const std::size_t m = coarse.dim(1);
  const std::size_t k = grid_.dim(0);
  const std::size_t d = m * k;
  const std::size_t hidden = config_.folding[0];

  const Tensor feat = ad::tile(g, ad::linear(g, feature, fold_[0].w, fold_[0].b), d);
  const Tensor point = ad::reshape(
      g,
      ad::tile(g,
               ad::reshape(g, ad::linear(g, coarse, fold_point_w_, Tensor()), {batch * m, hidden}),
               k),
      {batch, d, hidden});
  const Tensor cell = ad::reshape(
      g,
      ad::tile(g, ad::reshape(g, ad::linear(g, grid_, fold_grid_w_, Tensor()), {1, k * hidden}),
               batch * m),
      {batch, d, hidden});
  Tensor h = ad::add(g, ad::add(g, feat, point), cell);
  const Tensor offset = mlp(g, h, fold_, 1);

  const Tensor repeated =
      ad::reshape(g, ad::tile(g, ad::reshape(g, coarse, {batch * m, 3}), k), {batch, d, 3});
  return ad::add(g, repeated, offset);
}

PcnModel::Output PcnModel::forward(Graph& g, const Tensor& x) const {
  Output out;
  out.feature = encode(g, x);
  out.coarse = decode_coarse(g, out.feature);
  out.dense = refine(g, out.coarse, out.feature);
  return out;
}

std::vector<Tensor> PcnModel::parameters() const { return params_; }

std::size_t PcnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

ad::Checkpoint PcnModel::to_checkpoint() const {
  ad::Checkpoint ckpt;
  for (std::size_t i = 0; i < params_.size(); ++i) ckpt.tensors.emplace(names_[i], params_[i]);
  ckpt.metadata = nlohmann::json{{"model", "pcn"}, {"config", to_json(config_)}}.dump();
  return ckpt;
}

PcnModel PcnModel::from_checkpoint(const ad::Checkpoint& ckpt) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  if (meta.value("model", "") != "pcn") throw IoError("checkpoint does not hold a PCN model");
  PcnModel model(config_from_json(meta.at("config")));
  for (std::size_t i = 0; i < model.params_.size(); ++i) {
    const auto it = ckpt.tensors.find(model.names_[i]);
    if (it == ckpt.tensors.end()) throw IoError("checkpoint is missing parameter " + model.names_[i]);
    if (it->second.shape() != model.params_[i].shape()) {
      throw IoError("checkpoint parameter " + model.names_[i] + " has shape " +
                    ad::to_string(it->second.shape()) + ", expected " +
                    ad::to_string(model.params_[i].shape()));
    }
    auto src = it->second.values();
    std::copy(src.begin(), src.end(), model.params_[i].mutable_values().begin());
  }
  return model;
}

void PcnModel::save(const std::filesystem::path& path) const {
  ad::save_checkpoint(path, to_checkpoint());
}

PcnModel PcnModel::load(const std::filesystem::path& path) {
  return from_checkpoint(ad::load_checkpoint(path));
}

Tensor batch_tensor(std::span<const PointCloud* const> clouds) {
  if (clouds.empty()) throw EmptySetError("batch_tensor: no clouds");
  const std::size_t n = clouds.front()->size();
  Tensor t = Tensor::zeros({clouds.size(), n, 3});
  auto v = t.mutable_values();
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    if (clouds[b]->size() != n) {
      throw DimensionError("batch_tensor: clouds of sizes " + std::to_string(n) + " and " +
                           std::to_string(clouds[b]->size()) + " in one batch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) v[(b * n + i) * 3 + k] = clouds[b]->points[i][k];
    }
  }
  return t;
}

Tensor batch_tensor(const PointCloud& cloud) {
  const PointCloud* p = &cloud;
  return batch_tensor(std::span<const PointCloud* const>(&p, 1));
}

namespace {

PointCloud to_cloud(const Tensor& t) {
  PointCloud c;
  auto v = t.values();
  c.points.reserve(v.size() / 3);
  for (std::size_t i = 0; i + 2 < v.size(); i += 3) c.points.emplace_back(v[i], v[i + 1], v[i + 2]);
  return c;
}

}  // namespace

Prediction predict(const PcnModel& model, const PointCloud& input) {
  if (input.empty()) throw EmptySetError("predict: empty input cloud");
  Graph g(false);
  const auto out = model.forward(g, batch_tensor(input));
  Prediction p;
  p.coarse = to_cloud(out.coarse);
  p.dense = to_cloud(out.dense);
  p.feature.assign(out.feature.values().begin(), out.feature.values().end());
  return p;
}

}  // namespace pcnssm::pcn
