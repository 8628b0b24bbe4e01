// mfg_solve: command-line front end.
//
//   mfg_solve solve <config.json> [--out DIR] [--seed S] [--threads K] [--validate-only]
//
// Exit codes: 0 if any point succeeded, 1 for an invalid configuration,
// 2 if every point failed.
#include "mfg/cli/runners.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

constexpr const char* kOutputEnv = "MFG_OUTPUT_DIR";
constexpr const char* kDefaultOutput = "mfg_output";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stationary equilibria, turnpike trajectories and N-player simulation for the botnet-defense MFG"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool validate_only = false;

  auto* solve = app.add_subcommand("solve", "Run the scenario described by a JSON config");
  solve->add_option("config", config_path, "Scenario JSON file")->required();
  solve->add_option("--out", out_dir, std::string("Output directory (default: $") + kOutputEnv + " or " +
                                          kDefaultOutput + ")");
  solve->add_option("--seed", seed, "Override the config seed");
  solve->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  solve->add_flag("--validate-only", validate_only, "Validate the config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  mfg::cli::ScenarioConfig cfg;
  try {
    cfg = mfg::cli::parse_config(std::filesystem::path(config_path));
  } catch (const mfg::cli::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;

  if (validate_only) {
    std::cout << "valid: run=" << mfg::cli::to_string(cfg.run) << " d=" << cfg.model.d << '\n';
    return 0;
  }

  if (out_dir.empty()) out_dir = cfg.output.directory;
  if (out_dir.empty()) {
    const char* env = std::getenv(kOutputEnv);
    out_dir = env && *env ? env : kDefaultOutput;
  }

  const auto bundle = mfg::cli::execute(cfg, out_dir);
  for (const auto& e : bundle.errors) std::cerr << "error: " << e << '\n';
  std::cout << mfg::cli::to_string(cfg.run) << ": " << bundle.points_ok << "/" << bundle.points_total
            << " points ok, output in " << bundle.directory.string() << '\n';
  return bundle.exit_code();
}
