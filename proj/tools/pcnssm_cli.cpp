#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "pcnssm/app/pipeline.hpp"

using namespace pcnssm;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration JSON");
  cmd->add_option("--out", c.out, "Output directory; defaults to the config's output");
  cmd->add_option("--seed", c.seed, "Master seed; derives every component seed");
  cmd->add_option("--epochs", c.epochs, "Override pcn.max_epochs");
  cmd->add_option("--batch-size", c.batch_size, "Override pcn.batch_size");
  cmd->add_option("--lr", c.learning_rate, "Override pcn.learning_rate");
}

app::RunConfig resolve(const Common& c) {
  app::RunConfig config = c.config.empty() ? app::RunConfig{} : app::load_run_config(c.config);
  if (c.seed) config.apply_seed(*c.seed);
  if (c.epochs) config.pcn.max_epochs = *c.epochs;
  if (c.batch_size) config.pcn.batch_size = *c.batch_size;
  if (c.learning_rate) config.pcn.learning_rate = *c.learning_rate;
  if (c.out) config.output = *c.out;
  config.pcn.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Statistical shape models from point completion networks"};
  cli.require_subcommand(1);

  Common common;
  std::string manifest, checkpoint;
  std::vector<std::size_t> sizes{10, 50};
  std::vector<double> fractions{0.0, 0.25, 0.5};

  auto* generate = cli.add_subcommand("generate", "Generate or load a raw cohort");
  add_common(generate, common);

  auto* align = cli.add_subcommand("align", "Align, scale and sample inputs for a raw cohort");
  add_common(align, common);
  align->add_option("--manifest", manifest, "Raw cohort manifest")->required();

  auto* train = cli.add_subcommand("train", "Train the completion network");
  add_common(train, common);
  train->add_option("--manifest", manifest, "Prepared cohort manifest")->required();

  auto* evaluate = cli.add_subcommand("evaluate", "Write metrics.json for a checkpoint");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--manifest", manifest, "Prepared cohort manifest")->required();

  auto* ssm_cmd = cli.add_subcommand("ssm", "Build the shape model and group analyses");
  add_common(ssm_cmd, common);
  ssm_cmd->add_option("--checkpoint", checkpoint)->required();
  ssm_cmd->add_option("--manifest", manifest, "Prepared cohort manifest")->required();

  auto* ablate_size = cli.add_subcommand("ablate-size", "Retrain on growing training subsets");
  add_common(ablate_size, common);
  ablate_size->add_option("--manifest", manifest, "Prepared cohort manifest")->required();
  ablate_size->add_option("--sizes", sizes, "Training set sizes")->delimiter(',')->capture_default_str();

  auto* ablate_partial = cli.add_subcommand("ablate-partial", "Evaluate on masked test inputs");
  add_common(ablate_partial, common);
  ablate_partial->add_option("--checkpoint", checkpoint)->required();
  ablate_partial->add_option("--manifest", manifest, "Prepared cohort manifest")->required();
  ablate_partial->add_option("--fractions", fractions, "Missing fractions in [0, 1)")
      ->delimiter(',')
      ->capture_default_str();

  auto* run = cli.add_subcommand("run", "generate, align, train, evaluate and ssm");
  add_common(run, common);

  auto* defaults = cli.add_subcommand("default-config", "Print the resolved run configuration");
  add_common(defaults, common);

  CLI11_PARSE(cli, argc, argv);

  try {
    if (defaults->parsed()) {
      std::cout << app::to_json(resolve(common)).dump(2) << '\n';
      return 0;
    }
    const app::RunConfig config = resolve(common);
    const fs::path out = config.output;
    fs::path result;
    if (generate->parsed()) result = app::cmd_generate(config, out);
    if (align->parsed()) result = app::cmd_align(config, manifest, out);
    if (train->parsed()) {
      app::save_run_config(out / "config.json", config);
      result = app::cmd_train(config, manifest, out);
    }
    if (evaluate->parsed()) result = app::cmd_evaluate(config, checkpoint, manifest, out);
    if (ssm_cmd->parsed()) result = app::cmd_ssm(config, checkpoint, manifest, out);
    if (ablate_size->parsed()) result = app::cmd_ablate_size(config, manifest, sizes, out);
    if (ablate_partial->parsed()) {
      result = app::cmd_ablate_partial(config, checkpoint, manifest, fractions, out);
    }
    if (run->parsed()) result = app::cmd_run(config, out);
    std::cout << result.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
