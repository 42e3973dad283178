#include "pcnssm/ssm/ssm.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "pcnssm/autodiff/checkpoint.hpp"
#include "pcnssm/error.hpp"
#include "pcnssm/geometry/io.hpp"
#include "pcnssm/random.hpp"

namespace pcnssm::ssm {

namespace {

using Index = Eigen::Index;

std::size_t retained(const ShapeModel& model, double retain) {
  return compactness(model, retain);
}

void fix_signs(Eigen::MatrixXd& modes) {
  for (Index k = 0; k < modes.cols(); ++k) {
    Index arg = 0;
    modes.col(k).cwiseAbs().maxCoeff(&arg);
    if (modes(arg, k) < 0.0) modes.col(k) *= -1.0;
  }
}

std::pair<std::string, std::string> resolve_groups(
    const Pdm& pdm, const std::optional<std::pair<std::string, std::string>>& groups) {
  if (pdm.labels.size() != pdm.shapes()) {
    throw ContractError("group analysis needs one label per PDM row");
  }
  if (groups) return *groups;
  const std::set<std::string> distinct(pdm.labels.begin(), pdm.labels.end());
  if (distinct.size() != 2) {
    throw ContractError("group analysis needs exactly two labels, found " +
                        std::to_string(distinct.size()));
  }
  return {*distinct.begin(), *std::next(distinct.begin())};
}

Eigen::VectorXd group_mean(const Eigen::MatrixXd& rows, const std::vector<std::string>& labels,
                           const std::string& group, std::size_t& count) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows.cols());
  count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != group) continue;
    sum += rows.row(static_cast<Index>(i)).transpose();
    ++count;
  }
  if (count == 0) throw ContractError("group '" + group + "' has no shapes");
  return sum / static_cast<double>(count);
}

}  // namespace

Vec3 Pdm::point(std::size_t shape, std::size_t j) const {
  const auto r = static_cast<Index>(shape);
  const auto c = static_cast<Index>(3 * j);
  return Vec3(rows(r, c), rows(r, c + 1), rows(r, c + 2));
}

Pdm make_pdm(std::span<const PointCloud> coarse, std::vector<std::string> ids,
             std::vector<std::string> labels) {
  if (coarse.empty()) throw EmptySetError("make_pdm: no shapes");
  if (ids.size() != coarse.size()) throw DimensionError("make_pdm: one id per shape required");
  if (!labels.empty() && labels.size() != coarse.size()) {
    throw DimensionError("make_pdm: labels must be empty or one per shape");
  }
  const std::size_t m = coarse.front().size();
  Pdm pdm;
  pdm.rows.resize(static_cast<Index>(coarse.size()), static_cast<Index>(3 * m));
  for (std::size_t s = 0; s < coarse.size(); ++s) {
    if (coarse[s].size() != m) {
      throw DimensionError("make_pdm: shape '" + ids[s] + "' has " +
                           std::to_string(coarse[s].size()) + " points, expected " +
                           std::to_string(m));
    }
    for (std::size_t j = 0; j < m; ++j) {
      pdm.rows.block<1, 3>(static_cast<Index>(s), static_cast<Index>(3 * j)) =
          coarse[s].points[j].transpose();
    }
  }
  pdm.ids = std::move(ids);
  pdm.labels = std::move(labels);
  return pdm;
}

Pdm build_pdm(const pcn::PcnModel& model, std::span<const ShapeSample> samples,
              const PdmOptions& options) {
  std::vector<PointCloud> coarse;
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  const bool labelled = !samples.empty() &&
                        std::all_of(samples.begin(), samples.end(),
                                    [](const ShapeSample& s) { return s.label.has_value(); });
  for (const ShapeSample& s : samples) {
    try {
      coarse.push_back(pcn::predict(model, s.input).coarse);
    } catch (const std::exception& e) {
      throw std::runtime_error("prediction failed for shape '" + s.id + "': " + e.what());
    }
    if (options.unscale) {
      for (Vec3& p : coarse.back().points) p /= options.unscale->scale;
    }
    ids.push_back(s.id);
    if (labelled) labels.push_back(*s.label);
  }
  return make_pdm(coarse, std::move(ids), std::move(labels));
}

Pdm concat(const Pdm& a, const Pdm& b) {
  if (a.rows.cols() != b.rows.cols()) throw DimensionError("concat: PDM widths differ");
  Pdm out;
  out.rows.resize(a.rows.rows() + b.rows.rows(), a.rows.cols());
  out.rows << a.rows, b.rows;
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  if (!a.labels.empty() && !b.labels.empty()) {
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  }
  return out;
}

Pdm select(const Pdm& pdm, std::span<const std::size_t> rows) {
  Pdm out;
  out.rows.resize(static_cast<Index>(rows.size()), pdm.rows.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= pdm.shapes()) throw BoundsError("select: row index out of range");
    out.rows.row(static_cast<Index>(i)) = pdm.rows.row(static_cast<Index>(rows[i]));
    out.ids.push_back(pdm.ids[rows[i]]);
    if (!pdm.labels.empty()) out.labels.push_back(pdm.labels[rows[i]]);
  }
  return out;
}

Eigen::MatrixXd ShapeModel::scores(const Eigen::MatrixXd& rows, std::size_t k) const {
  const auto kk = static_cast<Index>(std::min(k, mode_count()));
  return (rows.rowwise() - mean.transpose()) * modes.leftCols(kk);
}

Eigen::VectorXd ShapeModel::reconstruct(const Eigen::VectorXd& row, std::size_t k) const {
  const auto kk = static_cast<Index>(std::min(k, mode_count()));
  const auto basis = modes.leftCols(kk);
  return mean + basis * (basis.transpose() * (row - mean));
}

ShapeModel fit_pca(const Eigen::MatrixXd& rows, PcaRoute route) {
  const Index s = rows.rows();
  const Index d = rows.cols();
  if (s < 2) throw ContractError("fit_pca: need at least 2 shapes, got " + std::to_string(s));
  if (d == 0) throw DimensionError("fit_pca: rows are empty");
  const Index k = std::min(s - 1, d);
  ShapeModel model;
  model.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd x = rows.rowwise() - model.mean.transpose();
  const double denom = static_cast<double>(s - 1);
  if (route == PcaRoute::Auto) route = s < d ? PcaRoute::Gram : PcaRoute::Covariance;

  Eigen::VectorXd values(k);
  Eigen::MatrixXd vectors(d, k);
  if (route == PcaRoute::Gram) {
    const Eigen::MatrixXd gram = (x * x.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw NumericalError("fit_pca: eigensolver failed");
    for (Index i = 0; i < k; ++i) {
      const Index src = s - 1 - i;
      values(i) = eig.eigenvalues()(src);
      vectors.col(i) = x.transpose() * eig.eigenvectors().col(src);
    }
  } else {
    const Eigen::MatrixXd cov = (x.transpose() * x) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericalError("fit_pca: eigensolver failed");
    for (Index i = 0; i < k; ++i) {
      values(i) = eig.eigenvalues()(d - 1 - i);
      vectors.col(i) = eig.eigenvectors().col(d - 1 - i);
    }
  }

  const double top = std::max(values.maxCoeff(), 0.0);
  const double floor = 1e-12 * top;
  Index nonzero = 0;
  while (nonzero < k && top > 0.0 && values(nonzero) > floor) ++nonzero;
  values.tail(k - nonzero).setZero();
  if (route == PcaRoute::Gram && nonzero > 0) {
    // X^T u has norm sqrt((S-1) lambda); QR re-orthonormalizes and removes
    // accumulated rounding at the same time.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(vectors.leftCols(nonzero).eval());
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, nonzero);
    const Eigen::VectorXd diag = qr.matrixQR().diagonal().head(nonzero);
    for (Index i = 0; i < nonzero; ++i) {
      if (diag(i) < 0.0) q.col(i) *= -1.0;
    }
    vectors.leftCols(nonzero) = q;
  }
  if (nonzero < k) {
    // Any orthonormal basis of the complement serves for zero-variance modes.
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d, k);
    if (nonzero > 0) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(vectors.leftCols(nonzero).eval());
      q = qr.householderQ() * q;
    }
    vectors.rightCols(k - nonzero) = q.rightCols(k - nonzero);
  }
  fix_signs(vectors);
  model.modes = std::move(vectors);
  model.variances = std::move(values);
  return model;
}

std::size_t compactness(const ShapeModel& model, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0) {
    throw ContractError("compactness: threshold must lie in (0, 1]");
  }
  const double total = model.variances.sum();
  if (!(total > 0.0)) return 0;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < model.mode_count(); ++k) {
    cumulative += model.variances(static_cast<Index>(k));
    if (cumulative >= threshold * total * (1.0 - 1e-12)) return k + 1;
  }
  return model.mode_count();
}

double mean_point_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() % 3 != 0) {
    throw DimensionError("mean_point_distance: rows must have equal length divisible by 3");
  }
  const Index m = a.size() / 3;
  double sum = 0.0;
  for (Index j = 0; j < m; ++j) sum += (a.segment<3>(3 * j) - b.segment<3>(3 * j)).norm();
  return sum / static_cast<double>(m);
}

double generalization(const ShapeModel& model, const Eigen::MatrixXd& heldout, double retain) {
  if (heldout.rows() == 0) throw EmptySetError("generalization: no held-out rows");
  if (static_cast<std::size_t>(heldout.cols()) != model.dims()) {
    throw DimensionError("generalization: row width does not match the model");
  }
  const std::size_t k = retained(model, retain);
  double sum = 0.0;
  for (Index i = 0; i < heldout.rows(); ++i) {
    const Eigen::VectorXd row = heldout.row(i).transpose();
    sum += mean_point_distance(row, model.reconstruct(row, k));
  }
  return sum / static_cast<double>(heldout.rows());
}

double specificity(const ShapeModel& model, const Eigen::MatrixXd& training,
                   std::size_t n_samples, double retain, std::uint64_t seed) {
  if (training.rows() == 0) throw EmptySetError("specificity: no training rows");
  if (n_samples == 0) throw ContractError("specificity: need at least one sample");
  if (static_cast<std::size_t>(training.cols()) != model.dims()) {
    throw DimensionError("specificity: row width does not match the model");
  }
  const std::size_t k = retained(model, retain);
  double sum = 0.0;
  Eigen::VectorXd z(static_cast<Index>(k));
  for (std::size_t n = 0; n < n_samples; ++n) {
    Rng rng(derive_seed(seed, n));
    for (std::size_t i = 0; i < k; ++i) {
      z(static_cast<Index>(i)) = rng.normal() * std::sqrt(model.variances(static_cast<Index>(i)));
    }
    const Eigen::VectorXd sample = model.mean + model.modes.leftCols(static_cast<Index>(k)) * z;
    double best = std::numeric_limits<double>::infinity();
    for (Index r = 0; r < training.rows(); ++r) {
      best = std::min(best, mean_point_distance(sample, training.row(r).transpose()));
    }
    sum += best;
  }
  return sum / static_cast<double>(n_samples);
}

GroupDifference group_difference(const Pdm& pdm,
                                 std::optional<std::pair<std::string, std::string>> groups) {
  const auto [a, b] = resolve_groups(pdm, groups);
  std::size_t na = 0, nb = 0;
  const Eigen::VectorXd diff =
      group_mean(pdm.rows, pdm.labels, b, nb) - group_mean(pdm.rows, pdm.labels, a, na);
  GroupDifference out;
  out.group_a = a;
  out.group_b = b;
  for (std::size_t j = 0; j < pdm.points(); ++j) {
    const Vec3 v = diff.segment<3>(static_cast<Index>(3 * j));
    out.displacement.push_back(v);
    out.magnitude.push_back(v.norm());
  }
  return out;
}

LdaResult lda_axis(const Pdm& pdm, double retain,
                   std::optional<std::pair<std::string, std::string>> groups) {
  const auto [a, b] = resolve_groups(pdm, groups);
  const ShapeModel model = fit_pca(pdm.rows);
  const std::size_t k = std::max<std::size_t>(1, retained(model, retain));
  const Eigen::MatrixXd scores = model.scores(pdm.rows, k);
  std::size_t na = 0, nb = 0;
  const Eigen::VectorXd mean_a = group_mean(scores, pdm.labels, a, na);
  const Eigen::VectorXd mean_b = group_mean(scores, pdm.labels, b, nb);
  if (na < 2 || nb < 2) throw ContractError("lda_axis: each group needs at least 2 shapes");

  const auto kk = static_cast<Index>(k);
  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(kk, kk);
  for (std::size_t i = 0; i < pdm.shapes(); ++i) {
    const std::string& label = pdm.labels[i];
    if (label != a && label != b) continue;
    const Eigen::VectorXd c =
        scores.row(static_cast<Index>(i)).transpose() - (label == a ? mean_a : mean_b);
    within += c * c.transpose();
  }
  within /= static_cast<double>(na + nb - 2);
  const double trace = within.trace();
  within.diagonal().array() += 1e-6 * (trace > 0.0 ? trace : 1.0);
  Eigen::VectorXd w = within.ldlt().solve(mean_b - mean_a);
  const double norm = w.norm();
  if (!(norm > 0.0)) {
    w = Eigen::VectorXd::Unit(kk, 0);
  } else {
    w /= norm;
  }

  LdaResult out;
  out.group_a = a;
  out.group_b = b;
  out.retained_modes = k;
  out.direction = w;
  double sum_a = 0.0, sum_b = 0.0;
  for (std::size_t i = 0; i < pdm.shapes(); ++i) {
    const double p = scores.row(static_cast<Index>(i)).dot(w);
    out.projections.push_back(p);
    if (pdm.labels[i] == a) sum_a += p;
    if (pdm.labels[i] == b) sum_b += p;
  }
  out.threshold = 0.5 * (sum_a / static_cast<double>(na) + sum_b / static_cast<double>(nb));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pdm.shapes(); ++i) {
    if (pdm.labels[i] == a && out.projections[i] < out.threshold) ++correct;
    if (pdm.labels[i] == b && out.projections[i] > out.threshold) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(na + nb);
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("pearson: need equal, non-empty inputs");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  const double denom = std::sqrt(saa * sbb);
  return denom > 0.0 ? sab / denom : 0.0;
}

void save_shape_model(const std::filesystem::path& directory, const ShapeModel& model) {
  std::filesystem::create_directories(directory);
  const auto d = model.dims();
  const auto k = model.mode_count();
  ad::Checkpoint ckpt;
  ckpt.tensors["mean"] = ad::Tensor::from({d}, std::vector<double>(model.mean.data(), model.mean.data() + d));
  std::vector<double> modes(d * k);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      modes[i * k + c] = model.modes(static_cast<Index>(i), static_cast<Index>(c));
    }
  }
  ckpt.tensors["modes"] = ad::Tensor::from({d, k}, std::move(modes));
  ckpt.tensors["variances"] = ad::Tensor::from(
      {k}, std::vector<double>(model.variances.data(), model.variances.data() + k));
  ckpt.metadata = R"({"kind":"shape_model"})";
  ad::save_checkpoint(directory / "shape_model.bin", ckpt);

  nlohmann::json summary;
  summary["dims"] = d;
  summary["points"] = d / 3;
  summary["modes"] = k;
  summary["variances"] = std::vector<double>(model.variances.data(), model.variances.data() + k);
  std::vector<double> fraction;
  const double total = model.variances.sum();
  double cumulative = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    cumulative += model.variances(static_cast<Index>(i));
    fraction.push_back(total > 0.0 ? cumulative / total : 0.0);
  }
  summary["cumulative_variance_fraction"] = fraction;
  summary["compactness_99"] = compactness(model, 0.99);
  summary["arrays"] = "shape_model.bin";
  const auto tmp = directory / "shape_model.json.tmp";
  std::ofstream(tmp) << summary.dump(2) << '\n';
  std::filesystem::rename(tmp, directory / "shape_model.json");
}

ShapeModel load_shape_model(const std::filesystem::path& directory) {
  const ad::Checkpoint ckpt = ad::load_checkpoint(directory / "shape_model.bin");
  auto get = [&](const char* name) -> const ad::Tensor& {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw IoError(std::string("shape model is missing ") + name);
    return it->second;
  };
  const ad::Tensor& mean = get("mean");
  const ad::Tensor& modes = get("modes");
  const ad::Tensor& variances = get("variances");
  const std::size_t d = mean.size();
  const std::size_t k = variances.size();
  if (modes.rank() != 2 || modes.dim(0) != d || modes.dim(1) != k) {
    throw IoError("shape model arrays have inconsistent shapes");
  }
  ShapeModel model;
  model.mean = Eigen::Map<const Eigen::VectorXd>(mean.values().data(), static_cast<Index>(d));
  model.variances = Eigen::Map<const Eigen::VectorXd>(variances.values().data(), static_cast<Index>(k));
  model.modes = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      modes.values().data(), static_cast<Index>(d), static_cast<Index>(k));
  return model;
}

std::vector<std::filesystem::path> export_mode_clouds(const std::filesystem::path& directory,
                                                      const ShapeModel& model, std::size_t modes,
                                                      double sigmas) {
  std::filesystem::create_directories(directory);
  auto to_cloud = [](const Eigen::VectorXd& row) {
    PointCloud c;
    for (Index j = 0; j + 2 < row.size(); j += 3) c.points.emplace_back(row(j), row(j + 1), row(j + 2));
    return c;
  };
  std::vector<std::filesystem::path> written;
  written.push_back(directory / "mean.ply");
  io::write_cloud(written.back(), to_cloud(model.mean));
  for (std::size_t k = 0; k < std::min(modes, model.mode_count()); ++k) {
    const auto kk = static_cast<Index>(k);
    const Eigen::VectorXd delta = sigmas * std::sqrt(model.variances(kk)) * model.modes.col(kk);
    written.push_back(directory / ("mode" + std::to_string(k + 1) + "_minus.ply"));
    io::write_cloud(written.back(), to_cloud(model.mean - delta));
    written.push_back(directory / ("mode" + std::to_string(k + 1) + "_plus.ply"));
    io::write_cloud(written.back(), to_cloud(model.mean + delta));
  }
  return written;
}

}  // namespace pcnssm::ssm
