#pragma once

#include <cstdint>
#include <vector>

#include "rse/backend.hpp"
#include "rse/core.hpp"
#include "rse/dedup.hpp"

namespace rse::strategies {

// All strategies draw each rollout's seed from (config.seed, problem id,
// group, round, index), so runs are reproducible call by call and rollouts
// never share sampling randomness. A failed backend call becomes a rollout
// with finish == error instead of aborting the round.

// N independent attempts on the bare task prompt.
std::vector<core::Rollout> run_standard(const core::Problem& problem,
                                        const core::SearchConfig& config, int n,
                                        backend::Backend& backend, int group = 0,
                                        int round = 0);

// One distill-and-recycle iteration: solve K times against the current bank,
// distill every attempt, embed and greedily admit the new notes, report.
struct RoundOutcome {
  std::vector<core::Rollout> rollouts;
  core::ExperienceBank bank;       // input bank plus admitted items
  core::IterationReport report;
  int dropped_distills = 0;        // attempts whose distiller reply failed to parse
};

RoundOutcome run_rse_round(const core::Problem& problem, const core::ExperienceBank& bank,
                           int round, int batch, int group, const core::SearchConfig& config,
                           backend::Backend& backend, const dedup::Embedder& embedder);

// Result of one group's full run. Banks hold the post-round snapshots for
// bank-carrying strategies and stay empty otherwise.
struct GroupResult {
  int group = 0;
  std::vector<core::RoundRecord> rounds;
  std::vector<core::ExperienceBank> banks;
};

struct StrategyResult {
  std::vector<GroupResult> groups;
};

// Full run of one group, resumable: `start_round` rounds are assumed done
// and `bank` is their accumulated state.
GroupResult run_rse_group(const core::Problem& problem, const core::SearchConfig& config,
                          backend::Backend& backend, const dedup::Embedder& embedder,
                          int group, int start_round = 0, core::ExperienceBank bank = {});

// Sequential refinement: each round's rollout i sees only rollout i of the
// previous round. Requires uniform batch sizes so chains stay aligned.
GroupResult run_self_refine_group(const core::Problem& problem,
                                  const core::SearchConfig& config,
                                  backend::Backend& backend, int group, int start_round = 0,
                                  std::vector<std::string> previous_finals = {});

// Reference-conditioned recombination: each round's rollouts see all final
// responses of the previous round (capped at refs_per_group, oldest dropped
// first when the prompt exceeds the context budget).
GroupResult run_pacore_group(const core::Problem& problem, const core::SearchConfig& config,
                             backend::Backend& backend, int group, int start_round = 0,
                             std::vector<std::string> previous_finals = {});

// Dispatch on config.strategy over all groups. standard and majority_vote
// run the whole budget (sum of batch sizes) as one iteration per group.
StrategyResult run_strategy(const core::Problem& problem, const core::SearchConfig& config,
                            backend::Backend& backend, const dedup::Embedder& embedder);

}  // namespace rse::strategies
