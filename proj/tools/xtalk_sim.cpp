// xtalk-sim <experiment> --config <path> [--out <dir>] [--workers N] [--seed S]
//
// Exit codes: 0 success, 1 configuration error, 2 some points failed,
// 3 output could not be written.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "xtalk/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Microwave-crosstalk simulator and virtual-Z mitigation harness"};
  std::string experiment, config_path, out_dir;
  int workers = 0;
  std::uint64_t seed = 0;
  app.add_option("experiment", experiment, "Experiment to run")
      ->required()
      ->check(CLI::IsMember(xtalk::experiment_names()));
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");
  auto* workers_opt = app.add_option("--workers", workers, "Worker threads (env XTALK_SIM_WORKERS)")
                          ->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "Optimizer seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  xtalk::RunConfig config;
  try {
    config = xtalk::load_config(config_path);
    if (!config.experiment.empty() && config.experiment != experiment) {
      throw xtalk::ConfigError("config is for experiment '" + config.experiment + "', not '" + experiment + "'");
    }
    if (config.name.empty() || config.name == config.experiment) config.name = experiment;
    config.experiment = experiment;
    if (*out_opt) config.output_dir = out_dir;
    if (*workers_opt) {
      config.workers = workers;
    } else if (const char* env = std::getenv("XTALK_SIM_WORKERS")) {
      try {
        config.workers = std::stoi(env);
      } catch (const std::exception&) {
        throw xtalk::ConfigError(std::string("XTALK_SIM_WORKERS is not an integer: ") + env);
      }
    }
    if (*seed_opt) config.seed = seed;
    config.validate();
  } catch (const xtalk::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  try {
    return xtalk::run(config) > 0 ? 2 : 0;
  } catch (const xtalk::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const xtalk::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
