#include "rse/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "rse/errors.hpp"
#include "rse/prompts.hpp"
#include "rse/rng.hpp"

namespace rse::eval {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void erase_all(std::string& s, std::string_view needle) {
  std::size_t pos = 0;
  while ((pos = s.find(needle, pos)) != std::string::npos) s.erase(pos, needle.size());
}

// "5", "5.0", "-00.50" and friends reduce to one canonical decimal form;
// anything that is not a plain decimal is returned unchanged.
std::string canonicalize_decimal(const std::string& s) {
  std::size_t i = 0;
  bool negative = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) negative = s[i++] == '-';
  std::string digits, fraction;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) digits += s[i++];
  bool has_dot = i < s.size() && s[i] == '.';
  if (has_dot) {
    ++i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) fraction += s[i++];
  }
  if (i != s.size() || (digits.empty() && fraction.empty())) return s;  // not a decimal

  while (digits.size() > 1 && digits.front() == '0') digits.erase(digits.begin());
  while (!fraction.empty() && fraction.back() == '0') fraction.pop_back();
  if (digits.empty()) digits = "0";
  std::string out = digits;
  if (!fraction.empty()) out += "." + fraction;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view answer) {
  std::string s(trim(answer));
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = std::string(trim(std::string_view(s).substr(1, s.size() - 2)));
  }
  erase_all(s, "\\left");
  erase_all(s, "\\right");

  std::string collapsed;
  bool in_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !collapsed.empty()) collapsed += ' ';
    in_space = false;
    collapsed += c;
  }
  return canonicalize_decimal(collapsed);
}

std::optional<std::string> extract_answer(std::string_view final_text) {
  constexpr std::string_view kBox = "\\boxed{";
  std::size_t from = final_text.size();
  while (true) {
    std::size_t pos = final_text.rfind(kBox, from == 0 ? 0 : from - 1);
    if (pos == std::string_view::npos) return std::nullopt;
    std::size_t i = pos + kBox.size();
    int depth = 1;
    for (; i < final_text.size(); ++i) {
      if (final_text[i] == '{') ++depth;
      if (final_text[i] == '}' && --depth == 0) break;
    }
    if (depth == 0) {
      return normalize_answer(final_text.substr(pos + kBox.size(), i - pos - kBox.size()));
    }
    if (pos == 0) return std::nullopt;  // unbalanced and nothing earlier
    from = pos;
  }
}

std::optional<std::string> majority_vote(
    const std::vector<std::optional<std::string>>& answers) {
  std::map<std::string, int> counts;
  std::map<std::string, std::size_t> first_seen;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (!answers[i]) continue;
    counts[*answers[i]] += 1;
    first_seen.emplace(*answers[i], i);
  }
  if (counts.empty()) return std::nullopt;
  const std::string* best = nullptr;
  for (const auto& [answer, count] : counts) {
    if (!best || count > counts[*best] ||
        (count == counts[*best] && first_seen[answer] < first_seen[*best])) {
      best = &answer;
    }
  }
  return *best;
}

bool is_correct(const core::Rollout& rollout, std::string_view gold) {
  return !rollout.truncated && rollout.answer &&
         *rollout.answer == normalize_answer(gold);
}

double pass_at_1(std::span<const core::Rollout> rollouts, std::string_view gold) {
  if (rollouts.empty()) throw EvalError("pass@1 over an empty rollout set");
  int hits = 0;
  for (const core::Rollout& r : rollouts) hits += is_correct(r, gold);
  return static_cast<double>(hits) / static_cast<double>(rollouts.size());
}

double non_truncated_pass1(std::span<const core::Rollout> rollouts, std::string_view gold) {
  int kept = 0, hits = 0;
  for (const core::Rollout& r : rollouts) {
    if (r.truncated) continue;
    ++kept;
    hits += is_correct(r, gold);
  }
  if (kept == 0) {
    throw EvalError("non-truncated pass@1 is undefined: every rollout was truncated");
  }
  return static_cast<double>(hits) / static_cast<double>(kept);
}

double truncation_rate(std::span<const core::Rollout> rollouts) {
  if (rollouts.empty()) throw EvalError("truncation rate over an empty rollout set");
  int truncated = 0;
  for (const core::Rollout& r : rollouts) truncated += r.truncated;
  return static_cast<double>(truncated) / static_cast<double>(rollouts.size());
}

double answer_entropy(const std::vector<std::optional<std::string>>& answers) {
  if (answers.empty()) return 0.0;
  std::map<std::optional<std::string>, int> counts;
  for (const auto& a : answers) counts[a] += 1;
  const double n = static_cast<double>(answers.size());
  double h = 0.0;
  for (const auto& [_, count] : counts) {
    double q = static_cast<double>(count) / n;
    h -= q * std::log(q);
  }
  return h;
}

namespace {
void require_lengths(std::initializer_list<std::int64_t> values) {
  for (std::int64_t v : values) {
    if (v < 0) throw EvalError("token ledger lengths must be non-negative");
  }
}
}  // namespace

TokenLedger recombination_ledger(int round, std::int64_t n, std::int64_t resp_len,
                                 std::int64_t next_reason_len, std::int64_t next_resp_len) {
  require_lengths({n, resp_len, next_reason_len, next_resp_len});
  TokenLedger ledger;
  ledger.round = round;
  ledger.reason_in = n * n * resp_len;
  ledger.reason_out = n * (next_reason_len + next_resp_len);
  return ledger;
}

TokenLedger distilled_ledger(int round, std::int64_t n, std::int64_t distill_prompt_len,
                             std::int64_t reason_len, std::int64_t resp_len,
                             std::int64_t next_context_len, std::int64_t distill_out_len,
                             std::int64_t next_reason_len, std::int64_t next_resp_len) {
  require_lengths({n, distill_prompt_len, reason_len, resp_len, next_context_len,
                   distill_out_len, next_reason_len, next_resp_len});
  TokenLedger ledger;
  ledger.round = round;
  ledger.distill_in = n * (distill_prompt_len + reason_len + resp_len);
  ledger.distill_out = n * distill_out_len;
  ledger.reason_in = n * next_context_len;
  ledger.reason_out = n * (next_reason_len + next_resp_len);
  return ledger;
}

core::IterationReport build_report(int round, std::span<const core::Rollout> rollouts,
                                   const std::optional<std::string>& gold,
                                   std::pair<int, int> bank_sizes, TokenLedger ledger) {
  core::IterationReport report;
  report.round = round;
  report.bank_positives = bank_sizes.first;
  report.bank_negatives = bank_sizes.second;
  ledger.round = round;
  report.ledger = ledger;
  if (rollouts.empty()) return report;

  report.truncation_rate = truncation_rate(rollouts);
  std::vector<std::optional<std::string>> answers;
  answers.reserve(rollouts.size());
  for (const core::Rollout& r : rollouts) answers.push_back(r.answer);
  report.answer_entropy = answer_entropy(answers);

  if (gold) {
    report.pass1 = pass_at_1(rollouts, *gold);
    bool any_full = std::any_of(rollouts.begin(), rollouts.end(),
                                [](const core::Rollout& r) { return !r.truncated; });
    if (any_full) report.non_truncated_pass1 = non_truncated_pass1(rollouts, *gold);
  }
  return report;
}

ValidationOutcome validate_experiences(const core::Problem& problem,
                                       const core::ExperienceBank& bank,
                                       backend::Backend& judge, std::uint64_t seed) {
  ValidationOutcome outcome;
  const std::string system = prompts::render_validation_system();

  auto judge_side = [&](const std::vector<core::ExperienceItem>& items,
                        core::ExperienceKind kind, std::vector<bool>& verdicts,
                        std::optional<double>& accuracy) {
    if (items.empty()) return;
    std::vector<std::string> statements;
    statements.reserve(items.size());
    for (const core::ExperienceItem& item : items) statements.push_back(item.text);
    const std::string user = prompts::render_validation(problem, statements, kind);
    const std::uint64_t call_seed = rng::derive(
        seed, {rng::hash_label("validate"), rng::hash_label(problem.id),
               static_cast<std::uint64_t>(kind)});
    backend::Completion reply = judge.chat_complete(system, user, call_seed);
    verdicts = prompts::parse_validation(reply.final_text,
                                         static_cast<int>(statements.size()));
    int good = 0;
    for (bool v : verdicts) good += v;
    accuracy = static_cast<double>(good) / static_cast<double>(verdicts.size());
  };

  judge_side(bank.positives, core::ExperienceKind::positive, outcome.positive_verdicts,
             outcome.positive_accuracy);
  judge_side(bank.negatives, core::ExperienceKind::negative, outcome.negative_verdicts,
             outcome.negative_accuracy);
  return outcome;
}

}  // namespace rse::eval
