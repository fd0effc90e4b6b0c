#include "rse/theory.hpp"

#include <cmath>
#include <sstream>

#include "rse/errors.hpp"
#include "rse/rng.hpp"

namespace rse::theory {

namespace {

// Per-trial stream layout shared by simulate and coupled_run: trial t's
// attempt a draws u(a, j) = uniform_at(j) on the stream keyed by
// (seed, trial, attempt). Both procedures read the identical draws, which is
// what makes coupling arguments testable.
rng::Stream attempt_stream(std::uint64_t seed, std::int64_t trial, int attempt) {
  return rng::Stream{
      rng::derive(seed, {static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(attempt)}),
      0};
}

}  // namespace

CoverageModel make_uniform_model(int conclusions, double p) {
  return CoverageModel{conclusions, std::vector<double>(conclusions, p)};
}

void validate_model(const CoverageModel& model) {
  if (model.conclusions < 1) throw ConfigError("model needs at least one conclusion");
  if (static_cast<int>(model.p.size()) != model.conclusions) {
    throw ConfigError("model needs one probability per conclusion");
  }
  for (double p : model.p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("step probabilities must lie in (0, 1)");
  }
}

double closed_form(const CoverageModel& model, Procedure proc, int budget) {
  validate_model(model);
  if (budget < 1) throw ConfigError("budget must be >= 1");
  if (proc == Procedure::base) {
    double all_at_once = 1.0;
    for (double p : model.p) all_at_once *= p;
    return 1.0 - std::pow(1.0 - all_at_once, budget);
  }
  double product = 1.0;
  for (double p : model.p) product *= 1.0 - std::pow(1.0 - p, budget);
  return product;
}

Estimate simulate(const CoverageModel& model, Procedure proc, int budget,
                  std::int64_t trials, std::uint64_t seed) {
  validate_model(model);
  if (budget < 1) throw ConfigError("budget must be >= 1");
  if (trials < 1) throw ConfigError("trials must be >= 1");

  const int L = model.conclusions;
  std::int64_t successes = 0;
  for (std::int64_t t = 0; t < trials; ++t) {
    bool success = false;
    if (proc == Procedure::base) {
      for (int a = 1; a <= budget && !success; ++a) {
        rng::Stream s = attempt_stream(seed, t, a);
        bool all = true;
        for (int j = 1; j <= L; ++j) {
          if (s.uniform_at(j) >= model.p[j - 1]) {
            all = false;
            break;
          }
        }
        success = all;
      }
    } else {
      int established = 0;
      std::vector<bool> done(L, false);
      for (int a = 1; a <= budget && established < L; ++a) {
        rng::Stream s = attempt_stream(seed, t, a);
        for (int j = 1; j <= L; ++j) {
          if (!done[j - 1] && s.uniform_at(j) < model.p[j - 1]) {
            done[j - 1] = true;
            ++established;
          }
        }
      }
      success = established == L;
    }
    successes += success;
  }

  const double value = static_cast<double>(successes) / static_cast<double>(trials);
  Estimate est;
  est.value = value;
  est.standard_error = std::sqrt(std::max(value * (1.0 - value), 1e-12) /
                                 static_cast<double>(trials));
  est.trials = trials;
  return est;
}

CoupledOutcome coupled_run(const CoverageModel& model, int budget, std::uint64_t seed) {
  validate_model(model);
  if (budget < 1) throw ConfigError("budget must be >= 1");

  const int L = model.conclusions;
  std::vector<bool> memory(L, false);  // rse: established so far
  std::vector<double> draws(L);
  CoupledOutcome outcome;
  outcome.per_step_inclusion = true;

  for (int a = 1; a <= budget; ++a) {
    // Materialize the attempt's draws once; both procedure views read them.
    rng::Stream s = attempt_stream(seed, 0, a);
    for (int j = 1; j <= L; ++j) draws[j - 1] = s.uniform_at(j);

    bool attempt_all = true;  // base view: this attempt alone holds all steps
    for (int j = 0; j < L; ++j) attempt_all = attempt_all && draws[j] < model.p[j];
    if (attempt_all) outcome.base_success = true;

    for (int j = 0; j < L; ++j) {  // rse view: persistence plus the same draws
      if (draws[j] < model.p[j]) memory[j] = true;
    }

    // Every step the memoryless attempt holds must be held by the
    // memory-carrying state; a desynchronized stream would break this here.
    for (int j = 0; j < L; ++j) {
      if (draws[j] < model.p[j] && !memory[j]) outcome.per_step_inclusion = false;
    }
  }
  bool all = true;
  for (bool done : memory) all = all && done;
  outcome.rse_success = all;
  if (outcome.base_success && !outcome.rse_success) outcome.per_step_inclusion = false;
  return outcome;
}

SampleComplexity sample_complexity(const CoverageModel& model, double delta) {
  validate_model(model);
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");

  double p_min = 1.0, product = 1.0;
  for (double p : model.p) {
    p_min = std::min(p_min, p);
    product *= p;
  }
  SampleComplexity out;
  out.n_rse = static_cast<std::int64_t>(
      std::ceil(std::log(static_cast<double>(model.conclusions) / delta) / p_min));
  out.n_base = static_cast<std::int64_t>(std::ceil(std::log(1.0 / delta) / product));
  return out;
}

std::vector<CurvePoint> success_curves(const CoverageModel& model, int n_max,
                                       std::int64_t trials, std::uint64_t seed) {
  validate_model(model);
  if (n_max < 1) throw ConfigError("n_max must be >= 1");
  std::vector<CurvePoint> curve;
  curve.reserve(n_max);
  for (int n = 1; n <= n_max; ++n) {
    CurvePoint point;
    point.budget = n;
    point.closed_base = closed_form(model, Procedure::base, n);
    point.closed_rse = closed_form(model, Procedure::rse, n);
    Estimate base = simulate(model, Procedure::base, n,
                             trials, rng::derive(seed, {0xba5e, static_cast<std::uint64_t>(n)}));
    Estimate rse = simulate(model, Procedure::rse, n,
                            trials, rng::derive(seed, {0x5ea2c4, static_cast<std::uint64_t>(n)}));
    point.mc_base = base.value;
    point.mc_rse = rse.value;
    point.se_base = base.standard_error;
    point.se_rse = rse.standard_error;
    curve.push_back(point);
  }
  return curve;
}

std::string curves_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out << "budget,closed_base,closed_rse,mc_base,mc_rse,se_base,se_rse\n";
  out.precision(10);
  for (const CurvePoint& p : curve) {
    out << p.budget << ',' << p.closed_base << ',' << p.closed_rse << ',' << p.mc_base
        << ',' << p.mc_rse << ',' << p.se_base << ',' << p.se_rse << '\n';
  }
  return out.str();
}

}  // namespace rse::theory
