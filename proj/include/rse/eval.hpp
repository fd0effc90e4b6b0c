#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rse/backend.hpp"
#include "rse/core.hpp"
#include "rse/ledger.hpp"

namespace rse::eval {

// Contents of the last \boxed{...} with balanced braces in `final_text`;
// nullopt when there is none. The result is normalized.
std::optional<std::string> extract_answer(std::string_view final_text);

// Canonical answer form: trim, collapse internal whitespace, strip one layer
// of surrounding $...$, drop \left / \right, and strip trailing ".0*" from
// plain decimals so 5, 5.0 and " 5 " compare equal.
std::string normalize_answer(std::string_view answer);

// Most frequent present answer; ties break toward the earliest first
// occurrence; nullopt when no rollout produced an answer.
std::optional<std::string> majority_vote(
    const std::vector<std::optional<std::string>>& answers);

// A rollout counts as correct iff it is not truncated and its normalized
// answer equals the normalized gold.
bool is_correct(const core::Rollout& rollout, std::string_view gold);

// Fraction metrics over one iteration's rollouts. pass_at_1 and
// truncation_rate throw EvalError on an empty set; non_truncated_pass1 also
// throws when every rollout was truncated.
double pass_at_1(std::span<const core::Rollout> rollouts, std::string_view gold);
double non_truncated_pass1(std::span<const core::Rollout> rollouts, std::string_view gold);
double truncation_rate(std::span<const core::Rollout> rollouts);

// Shannon entropy (natural log) of the answer distribution; missing answers
// form one extra category. Zero for empty or single-category input.
double answer_entropy(const std::vector<std::optional<std::string>>& answers);

// Closed-form per-iteration ledgers for the two search shapes, with every
// length expressed in tokens. Reference-conditioned recombination feeds all
// n previous finals to each of n rollouts, so its prompt cost is quadratic
// in n; distill-then-solve reads each attempt once and a bounded bank, so
// both phases stay linear in n.
TokenLedger recombination_ledger(int round, std::int64_t n, std::int64_t resp_len,
                                 std::int64_t next_reason_len, std::int64_t next_resp_len);
TokenLedger distilled_ledger(int round, std::int64_t n, std::int64_t distill_prompt_len,
                             std::int64_t reason_len, std::int64_t resp_len,
                             std::int64_t next_context_len, std::int64_t distill_out_len,
                             std::int64_t next_reason_len, std::int64_t next_resp_len);

// Assembles the per-iteration report from rollouts and bank sizes. Tolerant
// where the metric ops are strict: empty rollout sets yield zero metrics,
// all-truncated sets leave non_truncated_pass1 empty, and a missing gold
// zeroes the correctness metrics.
core::IterationReport build_report(int round, std::span<const core::Rollout> rollouts,
                                   const std::optional<std::string>& gold,
                                   std::pair<int, int> bank_sizes, TokenLedger ledger);

// Judge audit of a bank: each side is validated in one call, statements
// numbered in bank order.
struct ValidationOutcome {
  std::vector<bool> positive_verdicts;
  std::vector<bool> negative_verdicts;
  std::optional<double> positive_accuracy;  // absent when the side is empty
  std::optional<double> negative_accuracy;
};

ValidationOutcome validate_experiences(const core::Problem& problem,
                                       const core::ExperienceBank& bank,
                                       backend::Backend& judge, std::uint64_t seed);

}  // namespace rse::eval
