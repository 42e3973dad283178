#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcnssm/app/run_config.hpp"
#include "pcnssm/datasets/datasets.hpp"
#include "pcnssm/pcn/trainer.hpp"
#include "pcnssm/ssm/ssm.hpp"

namespace pcnssm::app {

struct ShapeMetrics {
  std::string id;
  double coarse_cd = 0.0;
  double dense_cd = 0.0;
  double coarse_fscore = 0.0;
  double dense_fscore = 0.0;
  std::optional<double> coarse_p2f;  // scaled units; needs a mesh
  std::optional<double> dense_p2f;
  double coarse_uniformity = 0.0;
};

struct SplitMetrics {
  std::vector<ShapeMetrics> shapes;
  // Means over `shapes`.
  double coarse_cd = 0.0;
  double dense_cd = 0.0;
  double coarse_fscore = 0.0;
  double dense_fscore = 0.0;
  std::optional<double> coarse_p2f;
  std::optional<double> dense_p2f;
  double coarse_uniformity = 0.0;
};

struct ShapeModelMetrics {
  std::size_t compactness = 0;
  double generalization = 0.0;
  double specificity = 0.0;
};

struct MetricsReport {
  SplitMetrics train;
  SplitMetrics test;
  double scale = 1.0;  // frame scale; scaled length / scale = original units
  // PCA fitted on training rows; generalization measured on test rows.
  ShapeModelMetrics train_model;
  // PCA over train and test rows together; generalization by leave-one-out.
  ShapeModelMetrics combined_model;
};

nlohmann::json to_json(const SplitMetrics& m, double scale);
nlohmann::json to_json(const MetricsReport& report);

// Progress messages, one line each. The default writes to stderr.
using Logger = std::function<void(const std::string&)>;
Logger stderr_logger();

// Evaluates coarse and dense predictions of `samples`. With `missing` > 0
// each input is first masked by make_partial.
SplitMetrics evaluate_split(const pcn::PcnModel& model, std::span<const ShapeSample> samples,
                            const MetricSettings& settings, double missing = 0.0);
ShapeModelMetrics shape_model_metrics(const ssm::Pdm& train, const ssm::Pdm& test,
                                      const MetricSettings& settings);
ShapeModelMetrics combined_model_metrics(const ssm::Pdm& all, const MetricSettings& settings);
MetricsReport evaluate(const pcn::PcnModel& model, const Cohort& cohort,
                       const MetricSettings& settings);

struct SsmReport {
  ssm::ShapeModel model;
  ssm::Pdm train_pdm;
  ssm::Pdm test_pdm;
  // Pearson r between per-shape mode scores and each generator parameter,
  // keyed by parameter with one entry per mode. Training shapes only, then
  // train and test together.
  std::map<std::string, std::vector<double>> parameter_correlation;
  std::map<std::string, std::vector<double>> parameter_correlation_all;
  std::optional<ssm::GroupDifference> group_difference;
  std::optional<ssm::LdaResult> lda;
};

SsmReport analyze_shapes(const pcn::PcnModel& model, const Cohort& cohort,
                         const MetricSettings& settings);

// Command implementations. Each writes its artifacts under `out` atomically,
// records them in out/run.json, and returns the path of its main output.
std::filesystem::path cmd_generate(const RunConfig& config, const std::filesystem::path& out,
                                   const Logger& log = stderr_logger());
std::filesystem::path cmd_align(const RunConfig& config, const std::filesystem::path& raw_manifest,
                                const std::filesystem::path& out, const Logger& log = stderr_logger());
std::filesystem::path cmd_train(const RunConfig& config, const std::filesystem::path& manifest,
                                const std::filesystem::path& out, const Logger& log = stderr_logger());
std::filesystem::path cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                                   const std::filesystem::path& manifest,
                                   const std::filesystem::path& out, const Logger& log = stderr_logger());
std::filesystem::path cmd_ssm(const RunConfig& config, const std::filesystem::path& checkpoint,
                              const std::filesystem::path& manifest, const std::filesystem::path& out,
                              const Logger& log = stderr_logger());
std::filesystem::path cmd_ablate_size(const RunConfig& config, const std::filesystem::path& manifest,
                                      std::span<const std::size_t> sizes,
                                      const std::filesystem::path& out,
                                      const Logger& log = stderr_logger());
std::filesystem::path cmd_ablate_partial(const RunConfig& config,
                                         const std::filesystem::path& checkpoint,
                                         const std::filesystem::path& manifest,
                                         std::span<const double> fractions,
                                         const std::filesystem::path& out,
                                         const Logger& log = stderr_logger());
// generate, align, train, evaluate and ssm in sequence; returns out/run.json.
std::filesystem::path cmd_run(const RunConfig& config, const std::filesystem::path& out,
                              const Logger& log = stderr_logger());

// Atomic JSON write with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace pcnssm::app
