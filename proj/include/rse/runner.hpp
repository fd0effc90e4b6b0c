#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rse/backend.hpp"
#include "rse/core.hpp"
#include "rse/dedup.hpp"

namespace rse::runner {

// Mock-world construction parameters from the run config. Per-problem
// overrides come from the problem file's optional "mock" object.
struct MockWorldSpec {
  std::uint64_t seed = 0;
  int conclusions = 4;
  std::vector<double> p{0.3};
};

// A validated run configuration file.
struct RunSpec {
  core::SearchConfig config;
  backend::BackendProfile profile;
  dedup::Embedder embedder;
  std::string problems_path;
  std::string output_dir;
  double flops_factor = 2.0;
  bool validate_experiences = false;
  bool persist_finals = true;
  std::optional<MockWorldSpec> mock;
};

// Loads and validates a run config; paths in the file are resolved relative
// to the file's directory. Throws ConfigError.
RunSpec load_run_spec(const std::string& path);

// Loads the problem file (JSON array or JSONL of objects with id, statement,
// optional gold_answer, optional mock overrides). Throws ConfigError on
// duplicates or missing fields.
std::vector<core::Problem> load_problems(const std::string& path);

// Executes the run, appending one JSONL record per (problem, group, round)
// to <output_dir>/records.jsonl in canonical order. Already-recorded keys
// are skipped, so rerunning an interrupted run resumes it; reruns of a
// finished run are no-ops. Returns a process exit code.
int cmd_run(const std::string& config_path, std::ostream& log);

// Aggregates every records.jsonl under `results_dir` into per-round metric
// rows, writes <results_dir>/summary.csv, and echoes it to `out`.
int cmd_report(const std::string& results_dir, std::ostream& out);

struct TheoryArgs {
  int conclusions = 4;
  double p = 0.3;
  int n_max = 16;
  std::int64_t trials = 10000;
  double delta = 0.05;
  std::uint64_t seed = 0;
  std::string out_path;  // optional CSV destination
};

// Prints the closed-form vs Monte Carlo success curves and the sample
// complexity bounds for a uniform model.
int cmd_theory(const TheoryArgs& args, std::ostream& out);

}  // namespace rse::runner
