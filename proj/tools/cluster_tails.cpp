// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cluster_tails/cli.hpp"

int main(int argc, char** argv) {
  namespace ctc = cluster_tails::cli;
  CLI::App app{"Simulation and verification harness for heavy-tailed Poisson cluster processes"};
  app.set_version_flag("--version", ctc::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<unsigned> workers;
  std::optional<std::string> output_dir;

  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--workers", workers, "Worker threads; results do not depend on this")->check(CLI::PositiveNumber);
  run->add_option("--output-dir", output_dir, "Directory for the CSV and JSON outputs");

  auto* validate = app.add_subcommand("validate", "Validate a config and print derived model constants");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    ctc::RunOverrides overrides;
    overrides.workers = workers;
    if (output_dir) overrides.output_dir = *output_dir;
    return ctc::run_command(config_path, overrides, std::cout, std::cerr);
  }
  return ctc::validate_command(config_path, std::cout, std::cerr);
}
