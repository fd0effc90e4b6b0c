#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rse/errors.hpp"
#include "rse/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Experience-recycling test-time search engine"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "Execute a configured search run");
  run->add_option("--config", config_path, "Run configuration JSON file")
      ->required()
      ->check(CLI::ExistingFile);

  std::string results_dir;
  CLI::App* report = app.add_subcommand("report", "Summarize recorded runs as CSV");
  report->add_option("--dir", results_dir, "Directory holding records.jsonl files")
      ->required();

  rse::runner::TheoryArgs theory;
  CLI::App* theory_cmd =
      app.add_subcommand("theory", "Closed-form vs Monte Carlo success curves");
  theory_cmd->add_option("--L", theory.conclusions, "Number of serial conclusions")
      ->capture_default_str();
  theory_cmd->add_option("--p", theory.p, "Per-attempt success probability of each step")
      ->capture_default_str();
  theory_cmd->add_option("--n-max", theory.n_max, "Largest attempt budget")
      ->capture_default_str();
  theory_cmd->add_option("--trials", theory.trials, "Monte Carlo trials per budget")
      ->capture_default_str();
  theory_cmd->add_option("--delta", theory.delta, "Failure probability bound")
      ->capture_default_str();
  theory_cmd->add_option("--seed", theory.seed, "Simulation seed")->capture_default_str();
  theory_cmd->add_option("--out", theory.out_path, "Also write the curve CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return rse::runner::cmd_run(config_path, std::cout);
    if (report->parsed()) return rse::runner::cmd_report(results_dir, std::cout);
    return rse::runner::cmd_theory(theory, std::cout);
  } catch (const rse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
