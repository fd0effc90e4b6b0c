#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rse::theory {

// Analytical model of a task with `conclusions` independent serial steps:
// one attempt establishes step j with probability p[j], and a procedure
// succeeds once all steps are established. Two procedures over a budget of
// N attempts:
//   base: N independent attempts, success iff some single attempt
//         establishes every step at once;
//   rse:  attempts share a persistent memory, so step j only needs to be
//         established once across the N attempts.
struct CoverageModel {
  int conclusions = 0;
  std::vector<double> p;
};

CoverageModel make_uniform_model(int conclusions, double p);

// Throws ConfigError unless conclusions >= 1 and every p[j] lies in (0, 1).
void validate_model(const CoverageModel& model);

enum class Procedure { base, rse };

// Exact success probabilities:
//   base(N) = 1 - (1 - prod_j p_j)^N
//   rse(N)  = prod_j (1 - (1 - p_j)^N)
double closed_form(const CoverageModel& model, Procedure proc, int budget);

struct Estimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::int64_t trials = 0;
};

// Monte Carlo estimate over independent trials; deterministic in `seed`.
Estimate simulate(const CoverageModel& model, Procedure proc, int budget,
                  std::int64_t trials, std::uint64_t seed);

// One trial of both procedures driven by the identical array of uniform
// draws u(t, j), t = 1..budget. With shared draws the memory-carrying
// procedure dominates the memoryless one step by step, so per_step_inclusion
// and (base_success implies rse_success) must always hold.
struct CoupledOutcome {
  bool base_success = false;
  bool rse_success = false;
  bool per_step_inclusion = false;
};

CoupledOutcome coupled_run(const CoverageModel& model, int budget, std::uint64_t seed);

// Minimal budgets guaranteeing failure probability at most delta:
//   n_rse  = ceil(ln(L / delta) / p_min)   (upper bound via union bound)
//   n_base = ceil(ln(1 / delta) / prod_j p_j)
struct SampleComplexity {
  std::int64_t n_base = 0;
  std::int64_t n_rse = 0;
};

SampleComplexity sample_complexity(const CoverageModel& model, double delta);

// Closed-form and Monte Carlo success curves for budgets 1..n_max.
struct CurvePoint {
  int budget = 0;
  double closed_base = 0.0;
  double closed_rse = 0.0;
  double mc_base = 0.0;
  double mc_rse = 0.0;
  double se_base = 0.0;
  double se_rse = 0.0;
};

std::vector<CurvePoint> success_curves(const CoverageModel& model, int n_max,
                                       std::int64_t trials, std::uint64_t seed);

std::string curves_csv(const std::vector<CurvePoint>& curve);

}  // namespace rse::theory
