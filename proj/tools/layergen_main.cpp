// SPDX-License-Identifier: Apache-2.0
//
// layergen — train, analyze and export the layer-generality experiments.
//
// Exit codes: 0 success, 1 usage, 2 bad configuration, 3 missing or corrupt
// input, 4 numerical failure.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "layergen/orchestrator.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  int jobs_override = 0;
  int width = -1;       // filters; negative / empty means "all"
  long seed = -1;
  std::string xprime;
  layergen::Filters filters;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment configuration file")->required();
  cmd->add_option("--out", args.out_override,
                  "output root (overrides the config and LAYERGEN_OUT)");
  cmd->add_option("--jobs", args.jobs_override, "worker count override");
  cmd->add_option("--width", args.width, "restrict to one network width");
  cmd->add_option("--xprime", args.xprime, "restrict to one task position x'");
  cmd->add_option("--seed", args.seed, "restrict to one seed id");
}

layergen::ExperimentConfig load(CommonArgs& args) {
  layergen::ExperimentConfig cfg = layergen::config_load(args.config_path);
  if (!args.out_override.empty())
    cfg.out_root = args.out_override;
  else if (const char* env = std::getenv("LAYERGEN_OUT"); env && *env)
    cfg.out_root = env;
  if (args.jobs_override > 0) cfg.jobs = args.jobs_override;
  if (args.width >= 0) args.filters.width = args.width;
  if (args.seed >= 0) args.filters.seed = args.seed;
  if (!args.xprime.empty()) {
    try {
      args.filters.x_deci = layergen::parse_deci(args.xprime, "--xprime");
    } catch (const layergen::ParseError& e) {
      throw layergen::ConfigError(e.what());
    }
  }
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"layer-generality experiments for a family of Poisson problems"};
  app.require_subcommand(1);

  CommonArgs train_args, analyze_args, metrics_args, transfer_args, oracle_args, comp_args;
  CLI::App* c_train = app.add_subcommand("train", "train the (width x x' x seed) grid");
  add_common(c_train, train_args);
  CLI::App* c_analyze =
      app.add_subcommand("analyze", "similarity matrices and group statistics");
  add_common(c_analyze, analyze_args);
  CLI::App* c_metrics =
      app.add_subcommand("metrics", "dimensionality / reproducibility / specificity table");
  add_common(c_metrics, metrics_args);
  CLI::App* c_transfer = app.add_subcommand("transfer", "four-arm transfer experiments");
  add_common(c_transfer, transfer_args);
  CLI::App* c_oracle =
      app.add_subcommand("oracle", "finite-difference reference fields and error table");
  add_common(c_oracle, oracle_args);
  CLI::App* c_components =
      app.add_subcommand("components", "principal component fields of selected networks");
  add_common(c_components, comp_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (c_train->parsed()) {
      layergen::ExperimentConfig cfg = load(train_args);
      layergen::cmd_train(cfg, train_args.filters, std::cout);
    } else if (c_analyze->parsed()) {
      layergen::ExperimentConfig cfg = load(analyze_args);
      layergen::cmd_analyze(cfg, analyze_args.filters, std::cout);
    } else if (c_metrics->parsed()) {
      layergen::ExperimentConfig cfg = load(metrics_args);
      layergen::cmd_metrics(cfg, metrics_args.filters, std::cout);
    } else if (c_transfer->parsed()) {
      layergen::ExperimentConfig cfg = load(transfer_args);
      layergen::cmd_transfer(cfg, transfer_args.filters, std::cout);
    } else if (c_oracle->parsed()) {
      layergen::ExperimentConfig cfg = load(oracle_args);
      layergen::cmd_oracle(cfg, oracle_args.filters, std::cout);
    } else if (c_components->parsed()) {
      layergen::ExperimentConfig cfg = load(comp_args);
      layergen::cmd_components(cfg, comp_args.filters, std::cout);
    }
  } catch (const layergen::ConfigError& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 2;
  } catch (const layergen::MissingInputError& e) {
    std::cerr << "error (missing input): " << e.what() << "\n";
    return 3;
  } catch (const layergen::ParseError& e) {
    std::cerr << "error (corrupt input): " << e.what() << "\n";
    return 3;
  } catch (const layergen::VersionError& e) {
    std::cerr << "error (corrupt input): " << e.what() << "\n";
    return 3;
  } catch (const layergen::IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 3;
  } catch (const layergen::NumericalError& e) {
    std::cerr << "error (numerical): " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
