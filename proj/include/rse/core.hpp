#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rse/ledger.hpp"

namespace rse::core {

// One task instance. gold_answer is the canonical reference answer; it may
// be absent for unlabeled runs, in which case correctness metrics are
// reported as zero.
struct Problem {
  std::string id;
  std::string statement;
  std::optional<std::string> gold_answer;
};

enum class Strategy { standard, majority_vote, self_refine, pacore, rse };

// Throws ConfigError for unknown names.
Strategy strategy_from_name(std::string_view name);
std::string_view strategy_name(Strategy s);

// Full description of one search run. batch_sizes holds K_r for each of the
// `rounds` iterations; refs_per_group caps how many prior attempts a
// reference-conditioned strategy may cite.
struct SearchConfig {
  Strategy strategy = Strategy::rse;
  int rounds = 4;
  std::vector<int> batch_sizes{8, 8, 8, 8};
  int groups = 1;
  int refs_per_group = 32;
  double tau = 0.8;
  std::string backend_profile;
  std::optional<int> context_budget;
  std::optional<int> ref_truncate;
  std::uint64_t seed = 0;
  int workers = 8;
  // When true, an empty experience bank renders the bare task prompt instead
  // of the bank scaffold; the first iteration then matches the standard
  // baseline prompt byte for byte.
  bool plain_first_round = true;
};

// Returns the config unchanged when consistent; throws ConfigError otherwise
// (rounds/batch_sizes mismatch, non-positive counts, tau outside [0, 1]).
SearchConfig validate_config(SearchConfig config);

enum class Finish { stop, length, error };

std::string_view finish_name(Finish f);

// One sampled attempt. `truncated` is true when generation hit the length
// limit or the final text carries no extractable answer; truncated rollouts
// are never counted as correct.
struct Rollout {
  int group = 0;
  int round = 0;
  int index = 0;
  std::string prompt;
  std::string reasoning;
  std::string final_text;
  std::optional<std::string> answer;
  bool truncated = false;
  Finish finish = Finish::stop;
  int tokens_in = 0;
  int tokens_out = 0;
  std::uint64_t seed_used = 0;
};

enum class ExperienceKind { positive, negative };

std::string_view experience_kind_name(ExperienceKind k);

// Provenance of a distilled experience: which rollout it was extracted from.
struct ExperienceSource {
  int round = 0;
  int group = 0;
  int index = 0;
};

// A single distilled note. positive = a proposition verified to hold;
// negative = a pitfall to avoid. The embedding is empty until computed.
struct ExperienceItem {
  ExperienceKind kind = ExperienceKind::positive;
  std::string text;
  ExperienceSource source;
  std::vector<double> embedding;
};

// The accumulated experience for one (problem, group). Items are only ever
// appended; deduplication happens before admission, never by deletion.
struct ExperienceBank {
  std::vector<ExperienceItem> positives;
  std::vector<ExperienceItem> negatives;

  bool empty() const { return positives.empty() && negatives.empty(); }
  std::pair<int, int> sizes() const {
    return {static_cast<int>(positives.size()), static_cast<int>(negatives.size())};
  }
};

// Aggregate metrics for one iteration. non_truncated_pass1 is absent when
// every rollout of the iteration was truncated (the metric is undefined).
struct IterationReport {
  int round = 0;
  double pass1 = 0.0;
  std::optional<double> non_truncated_pass1;
  double truncation_rate = 0.0;
  double answer_entropy = 0.0;
  int bank_positives = 0;
  int bank_negatives = 0;
  eval::TokenLedger ledger;
};

struct RoundRecord {
  std::vector<Rollout> rollouts;
  IterationReport report;
};

// Round-by-round state for one (problem, group). Single-writer by contract:
// exactly one coordinator appends rounds; readers take copies.
struct SearchState {
  int current_round = 0;
  std::vector<RoundRecord> rounds;
  ExperienceBank bank;
};

// Appends one completed round. The report's round must equal
// state.current_round (throws ConfigError otherwise); the bank is left for
// the caller to update, since admission happens before reporting.
SearchState record_round(SearchState state, std::vector<Rollout> rollouts,
                         IterationReport report);

}  // namespace rse::core
