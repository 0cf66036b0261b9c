#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "fedmeta/commands.hpp"
#include "fedmeta/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"federated meta-learning with consensus penalties"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;

  CLI::App* train = app.add_subcommand("train", "run federated training, write trace and checkpoint");
  train->add_option("--config", config_path, "run configuration file")->required();

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "adapt a trained model on held-out target nodes");
  evaluate->add_option("--config", config_path, "run configuration file")->required();
  evaluate->add_option("--checkpoint", checkpoint_path, "trained model checkpoint")->required();

  CLI::App* forgetting =
      app.add_subcommand("forgetting", "retrain on new classes, measure drift from a prior model");
  forgetting->add_option("--config", config_path, "run configuration file")->required();

  CLI::App* diagnose =
      app.add_subcommand("diagnose", "estimate smoothness constants and check penalty margins");
  diagnose->add_option("--config", config_path, "run configuration file")->required();
  diagnose->add_option("--checkpoint", checkpoint_path, "optional training state to inspect");

  CLI11_PARSE(app, argc, argv);

  try {
    const fedmeta::RunConfig cfg = fedmeta::load_config_file(config_path);
    if (train->parsed()) return fedmeta::cmd_train(cfg);
    if (evaluate->parsed()) return fedmeta::cmd_evaluate(cfg, checkpoint_path);
    if (forgetting->parsed()) return fedmeta::cmd_forgetting(cfg);
    if (diagnose->parsed()) return fedmeta::cmd_diagnose(cfg, checkpoint_path);
  } catch (const std::exception& e) {
    std::cerr << "fedmeta: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
