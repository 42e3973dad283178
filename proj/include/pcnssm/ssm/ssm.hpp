#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcnssm/alignment/alignment.hpp"
#include "pcnssm/datasets/datasets.hpp"
#include "pcnssm/pcn/model.hpp"

namespace pcnssm::ssm {

// One row per shape: the flattened coarse output x0 y0 z0 x1 ... in fixed
// correspondence order.
struct Pdm {
  Eigen::MatrixXd rows;
  std::vector<std::string> ids;
  std::vector<std::string> labels;  // empty, or one per row

  std::size_t shapes() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t points() const { return static_cast<std::size_t>(rows.cols()) / 3; }
  Vec3 point(std::size_t shape, std::size_t j) const;
};

struct PdmOptions {
  // Divides by the cohort scale, giving lengths in the original units
  // within the aligned frame.
  std::optional<CohortFrame> unscale;
};
Pdm build_pdm(const pcn::PcnModel& model, std::span<const ShapeSample> samples,
              const PdmOptions& options = {});
Pdm make_pdm(std::span<const PointCloud> coarse, std::vector<std::string> ids,
             std::vector<std::string> labels = {});
// Rows are stacked in the order given.
Pdm concat(const Pdm& a, const Pdm& b);
Pdm select(const Pdm& pdm, std::span<const std::size_t> rows);

struct ShapeModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd modes;      // orthonormal columns
  Eigen::VectorXd variances;  // descending, >= 0

  std::size_t dims() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t mode_count() const { return static_cast<std::size_t>(variances.size()); }
  // Coordinates of rows in the first `k` modes.
  Eigen::MatrixXd scores(const Eigen::MatrixXd& rows, std::size_t k) const;
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& row, std::size_t k) const;
};

enum class PcaRoute { Auto, Gram, Covariance };
// Sample covariance with divisor S-1; K = min(S-1, 3M) modes. Modes of zero
// variance are completed to an orthonormal set. Each mode's sign is fixed so
// that its largest-magnitude entry is positive.
ShapeModel fit_pca(const Eigen::MatrixXd& rows, PcaRoute route = PcaRoute::Auto);

// Smallest K' whose cumulative variance fraction reaches `threshold`;
// 0 for a zero-variance model.
std::size_t compactness(const ShapeModel& model, double threshold = 0.99);

// Mean per-point Euclidean distance between two flattened rows.
double mean_point_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

double generalization(const ShapeModel& model, const Eigen::MatrixXd& heldout,
                      double retain = 0.99);
double specificity(const ShapeModel& model, const Eigen::MatrixXd& training, std::size_t n_samples = 1000,
                   double retain = 0.99, std::uint64_t seed = 0);

struct GroupDifference {
  std::string group_a;
  std::string group_b;
  std::vector<Vec3> displacement;  // mean_b - mean_a per correspondence
  std::vector<double> magnitude;
};
// Groups are the two distinct labels in sorted order unless named.
GroupDifference group_difference(const Pdm& pdm, std::optional<std::pair<std::string, std::string>> groups = {});

struct LdaResult {
  std::string group_a;
  std::string group_b;
  std::size_t retained_modes = 0;
  Eigen::VectorXd direction;     // unit, in PCA score space, pointing from a to b
  std::vector<double> projections;  // per shape, in PDM row order
  double threshold = 0.0;           // midpoint of the two group means
  double accuracy = 0.0;            // fraction on the correct side of the threshold
};
LdaResult lda_axis(const Pdm& pdm, double retain = 0.99,
                   std::optional<std::pair<std::string, std::string>> groups = {});

// Pearson correlation coefficient; 0 when either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);

// shape_model.json (summary) and shape_model.bin (arrays) inside `directory`.
void save_shape_model(const std::filesystem::path& directory, const ShapeModel& model);
ShapeModel load_shape_model(const std::filesystem::path& directory);

// mean.ply plus mode<k>_minus.ply / mode<k>_plus.ply at mean -/+ sigmas*sqrt(variance).
std::vector<std::filesystem::path> export_mode_clouds(const std::filesystem::path& directory,
                                                      const ShapeModel& model, std::size_t modes,
                                                      double sigmas = 2.0);

}  // namespace pcnssm::ssm
