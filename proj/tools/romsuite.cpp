#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "romsuite/workspace.hpp"

int main(int argc, char** argv) {
  CLI::App app{"romsuite - POD-Galerkin reduced order modeling with a neural memory closure"};
  app.require_subcommand(1);

  std::string config_path = "config.json";
  std::vector<std::string> overrides;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "Path to the JSON configuration file")
      ->capture_default_str();
  app.add_option("--set", overrides, "Override a config key, e.g. --set train.epochs=100");
  app.add_option("--seed", seed_override, "Override the top-level seed")
      ->each([&](const std::string&) { seed_set = true; });

  auto* generate = app.add_subcommand("generate", "Simulate the full-order snapshot dataset");
  auto* pod = app.add_subcommand("pod", "Compute the temperature and velocity POD bases");
  auto* build_rom = app.add_subcommand("build-rom",
                                       "Assemble Galerkin operators and the velocity map");
  bool identity_debug = false;
  build_rom->add_flag("--identity-basis", identity_debug,
                      "Debug: project onto the identity basis");
  auto* train = app.add_subcommand("train", "Train the neural closure");
  auto* eval = app.add_subcommand("eval", "Evaluate corrected and uncorrected ROMs");
  auto* simulate = app.add_subcommand("simulate", "Roll out closure-corrected trajectories");
  int batch = 1;
  std::string coeff_file, out_dir;
  simulate->add_option("--batch", batch, "Number of trajectories")->capture_default_str();
  simulate->add_option("--coeffs", coeff_file, "JSON coefficient file (default: sampled)");
  simulate->add_option("--out", out_dir, "Output directory (default: <workspace>/simulate)");

  // `romsuite <command> --config ...`: let global options trail the command.
  for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    auto config = romsuite::WorkspaceConfig::load(config_path, overrides);
    if (seed_set) {
      config.seed = seed_override;
      config.signal_spec.seed = seed_override;
      config.train.seed = seed_override;
    }
    if (generate->parsed()) romsuite::cmd_generate(config);
    if (pod->parsed()) romsuite::cmd_pod(config);
    if (build_rom->parsed()) romsuite::cmd_build_rom(config, identity_debug);
    if (train->parsed()) romsuite::cmd_train(config);
    if (eval->parsed()) romsuite::cmd_eval(config);
    if (simulate->parsed()) {
      romsuite::SimulateOptions options;
      options.batch = batch;
      options.coeff_file = coeff_file;
      options.out_dir = out_dir;
      romsuite::cmd_simulate(config, options);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
