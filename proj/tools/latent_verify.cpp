// latent-verify: staged command line driver over a run directory.
#include "latent_verify/run.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int exit_code(const lv::Error& e) {
  if (dynamic_cast<const lv::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const lv::MissingStage*>(&e)) return 3;
  if (dynamic_cast<const lv::StaleArtifact*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verify temporal properties of a dynamical system through a learned latent abstraction"};
  std::string command, config_path, run_dir;
  std::int64_t seed = -1;
  int rounds = -1;

  std::string commands;
  for (const auto& s : lv::stage_names()) commands += s + ", ";
  commands += "run";
  app.add_option("command", command, "one of: " + commands)->required();
  app.add_option("--config", config_path, "study configuration (JSON)")->required();
  app.add_option("--run-dir", run_dir, "directory holding artifacts and manifest.json")->required();
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--rounds", rounds, "override the number of refinement rounds");
  CLI11_PARSE(app, argc, argv);

  try {
    lv::StudyConfig cfg = lv::load_config(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (rounds >= 0) cfg.refinement.rounds = rounds;
    lv::validate(cfg);

    lv::RunLock lock(run_dir);
    lv::Run run(cfg, run_dir);
    if (command == "run")
      run.run_all();
    else
      run.run_stage(command);
  } catch (const lv::Error& e) {
    std::cerr << "latent-verify: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "latent-verify: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
