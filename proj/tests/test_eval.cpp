#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rse/errors.hpp"
#include "rse/eval.hpp"
#include "rse/mock_world.hpp"

using namespace rse;

namespace {

core::Rollout rollout(std::optional<std::string> answer, bool truncated = false) {
  core::Rollout r;
  r.answer = std::move(answer);
  r.truncated = truncated;
  return r;
}

}  // namespace

TEST_CASE("answers come from the last balanced boxed group") {
  CHECK(eval::extract_answer("the result is \\boxed{42}") == "42");
  CHECK(eval::extract_answer("\\boxed{1} then revised to \\boxed{7}") == "7");
  CHECK(eval::extract_answer("nested \\boxed{\\frac{1}{2}}") == "\\frac{1}{2}");
  CHECK(eval::extract_answer("deep \\boxed{a_{n} + b^{2}} end") == "a_{n} + b^{2}");
  CHECK(eval::extract_answer("no final value here") == std::nullopt);
  CHECK(eval::extract_answer("") == std::nullopt);
  // unbalanced last group: fall back to the previous complete one
  CHECK(eval::extract_answer("\\boxed{5} trailing \\boxed{open") == "5");
  CHECK(eval::extract_answer("only \\boxed{open") == std::nullopt);
  // extraction normalizes
  CHECK(eval::extract_answer("pad \\boxed{ 5.0 }") == "5");
}

TEST_CASE("normalization canonicalizes spacing, dollars, and plain decimals") {
  CHECK(eval::normalize_answer("  42  ") == "42");
  CHECK(eval::normalize_answer("$42$") == "42");
  CHECK(eval::normalize_answer("$$x+1$$") == "x+1");
  CHECK(eval::normalize_answer("5.0") == "5");
  CHECK(eval::normalize_answer("5.50") == "5.5");
  CHECK(eval::normalize_answer("-00.50") == "-0.5");
  CHECK(eval::normalize_answer("+007") == "7");
  CHECK(eval::normalize_answer("0.000") == "0");
  CHECK(eval::normalize_answer("\\left(0, 1\\right)") == "(0, 1)");
  CHECK(eval::normalize_answer("a  +\tb") == "a + b");
  // not plain decimals: left untouched beyond whitespace/dollar handling
  CHECK(eval::normalize_answer("1.2.3") == "1.2.3");
  CHECK(eval::normalize_answer("x.0") == "x.0");
  CHECK(eval::normalize_answer("") == "");
}

TEST_CASE("majority vote ignores missing answers and breaks ties by arrival") {
  using A = std::vector<std::optional<std::string>>;
  CHECK(eval::majority_vote(A{"4", "4", "9"}) == "4");
  CHECK(eval::majority_vote(A{"9", "4", "4"}) == "4");
  CHECK(eval::majority_vote(A{"7", "4", "7", "4"}) == "7");  // tie: first seen
  CHECK(eval::majority_vote(A{std::nullopt, "3", std::nullopt}) == "3");
  CHECK(eval::majority_vote(A{std::nullopt, std::nullopt}) == std::nullopt);
  CHECK(eval::majority_vote(A{}) == std::nullopt);
}

TEST_CASE("correctness requires a clean finish and a matching answer") {
  CHECK(eval::is_correct(rollout("42"), "42"));
  // the stored answer is already normalized (extract_answer's output); only
  // the gold side is normalized here
  CHECK(eval::is_correct(rollout(eval::extract_answer("\\boxed{ 42.0 }")), " 42 "));
  CHECK(!eval::is_correct(rollout("42", /*truncated=*/true), "42"));
  CHECK(!eval::is_correct(rollout("41"), "42"));
  CHECK(!eval::is_correct(rollout(std::nullopt), "42"));
}

TEST_CASE("fraction metrics are strict about empty denominators") {
  std::vector<core::Rollout> rollouts = {rollout("42"), rollout("41"),
                                         rollout("42", true), rollout(std::nullopt)};
  CHECK(eval::pass_at_1(rollouts, "42") == doctest::Approx(0.25));
  CHECK(eval::truncation_rate(rollouts) == doctest::Approx(0.25));
  // among the three non-truncated: one correct
  CHECK(eval::non_truncated_pass1(rollouts, "42") == doctest::Approx(1.0 / 3));

  std::vector<core::Rollout> none;
  CHECK_THROWS_AS(eval::pass_at_1(none, "42"), EvalError);
  CHECK_THROWS_AS(eval::truncation_rate(none), EvalError);
  std::vector<core::Rollout> all_cut = {rollout("42", true), rollout("41", true)};
  CHECK_THROWS_AS(eval::non_truncated_pass1(all_cut, "42"), EvalError);
}

TEST_CASE("answer entropy spans zero to log of the category count") {
  using A = std::vector<std::optional<std::string>>;
  CHECK(eval::answer_entropy(A{}) == doctest::Approx(0.0));
  CHECK(eval::answer_entropy(A{"4", "4", "4"}) == doctest::Approx(0.0));
  CHECK(eval::answer_entropy(A{"4", "9"}) == doctest::Approx(std::log(2.0)));
  CHECK(eval::answer_entropy(A{"1", "2", "3", "4"}) == doctest::Approx(std::log(4.0)));
  // nullopt is its own category
  CHECK(eval::answer_entropy(A{"4", std::nullopt}) == doctest::Approx(std::log(2.0)));
  // 3/4 vs 1/4 split
  double expected = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  CHECK(eval::answer_entropy(A{"4", "4", "4", "9"}) == doctest::Approx(expected));
}

TEST_CASE("recombination ledger is quadratic in the batch size") {
  eval::TokenLedger ledger = eval::recombination_ledger(2, 2, 100, 50, 10);
  CHECK(ledger.round == 2);
  CHECK(ledger.distill_in == 0);
  CHECK(ledger.distill_out == 0);
  CHECK(ledger.reason_in == 400);  // n^2 * resp = 4 * 100
  CHECK(ledger.reason_out == 120);  // n * (reason' + resp') = 2 * 60
  CHECK(ledger.t_in() == 400);
  CHECK(ledger.t_out() == 120);

  // doubling n quadruples the prompt side and doubles the output side
  eval::TokenLedger big = eval::recombination_ledger(2, 4, 100, 50, 10);
  CHECK(big.t_in() == 4 * ledger.t_in());
  CHECK(big.t_out() == 2 * ledger.t_out());

  CHECK_THROWS_AS(eval::recombination_ledger(0, -1, 100, 50, 10), EvalError);
  CHECK_THROWS_AS(eval::recombination_ledger(0, 2, -5, 50, 10), EvalError);
}

TEST_CASE("distilled ledger is linear in the batch size") {
  eval::TokenLedger ledger = eval::distilled_ledger(1, 2, 30, 50, 10, 40, 20, 50, 10);
  CHECK(ledger.distill_in == 180);  // n * (30 + 50 + 10)
  CHECK(ledger.reason_in == 80);    // n * 40
  CHECK(ledger.t_in() == 260);
  CHECK(ledger.distill_out == 40);  // n * 20
  CHECK(ledger.reason_out == 120);  // n * (50 + 10)
  CHECK(ledger.t_out() == 160);

  eval::TokenLedger big = eval::distilled_ledger(1, 4, 30, 50, 10, 40, 20, 50, 10);
  CHECK(big.t_in() == 2 * ledger.t_in());
  CHECK(big.t_out() == 2 * ledger.t_out());

  CHECK_THROWS_AS(eval::distilled_ledger(1, 2, 30, -1, 10, 40, 20, 50, 10), EvalError);
}

TEST_CASE("flops scale with the parameter count and both token totals") {
  eval::TokenLedger ledger = eval::recombination_ledger(0, 2, 100, 50, 10);
  CHECK(!ledger.flops.has_value());
  ledger.set_flops(7e9, 2);
  REQUIRE(ledger.flops.has_value());
  CHECK(*ledger.flops == doctest::Approx(2.0 * 7e9 * (400 + 120)));

  eval::TokenLedger sum = eval::distilled_ledger(1, 2, 30, 50, 10, 40, 20, 50, 10);
  eval::TokenLedger other = eval::distilled_ledger(1, 2, 30, 50, 10, 40, 20, 50, 10);
  sum += other;
  CHECK(sum.t_in() == 520);
  CHECK(sum.t_out() == 320);
}

TEST_CASE("report assembly is tolerant where the raw metrics are strict") {
  eval::TokenLedger ledger = eval::distilled_ledger(3, 1, 1, 1, 1, 1, 1, 1, 1);

  std::vector<core::Rollout> rollouts = {rollout("42"), rollout("41"), rollout("42", true)};
  core::IterationReport report = eval::build_report(3, rollouts, std::string("42"),
                                                    {4, 2}, ledger);
  CHECK(report.round == 3);
  CHECK(report.pass1 == doctest::Approx(1.0 / 3));
  REQUIRE(report.non_truncated_pass1.has_value());
  CHECK(*report.non_truncated_pass1 == doctest::Approx(0.5));
  CHECK(report.truncation_rate == doctest::Approx(1.0 / 3));
  // answers are {42, 41, 42}: a 2/3 vs 1/3 split
  double split = -(2.0 / 3 * std::log(2.0 / 3) + 1.0 / 3 * std::log(1.0 / 3));
  CHECK(report.answer_entropy == doctest::Approx(split));
  CHECK(report.bank_positives == 4);
  CHECK(report.bank_negatives == 2);

  // no gold: correctness metrics zero / absent, distribution metrics intact
  report = eval::build_report(3, rollouts, std::nullopt, {0, 0}, ledger);
  CHECK(report.pass1 == 0.0);
  CHECK(!report.non_truncated_pass1.has_value());
  CHECK(report.truncation_rate == doctest::Approx(1.0 / 3));

  // all truncated: the conditional metric is undefined, not an error
  std::vector<core::Rollout> all_cut = {rollout("42", true)};
  report = eval::build_report(3, all_cut, std::string("42"), {0, 0}, ledger);
  CHECK(report.pass1 == 0.0);
  CHECK(!report.non_truncated_pass1.has_value());
  CHECK(report.truncation_rate == 1.0);

  // empty iteration: all zeros
  report = eval::build_report(3, {}, std::string("42"), {0, 0}, ledger);
  CHECK(report.pass1 == 0.0);
  CHECK(report.truncation_rate == 0.0);
  CHECK(report.answer_entropy == 0.0);
}

TEST_CASE("bank validation judges each side in one call") {
  auto world = std::make_shared<backend::MockWorld>(42);
  world->add_problem("p", 2, {0.5, 0.5});
  backend::BackendProfile profile;
  profile.name = "mock-oracle";
  profile.kind = backend::Kind::mock;
  backend::MockBackend judge(profile, world);

  const backend::MockProblem& mp = world->at("p");
  core::ExperienceBank bank;
  core::ExperienceItem good;
  good.kind = core::ExperienceKind::positive;
  good.text = mp.sentences[0];
  core::ExperienceItem junk;
  junk.kind = core::ExperienceKind::positive;
  junk.text = "a confident but unsupported proposition";
  bank.positives = {good, junk};
  core::ExperienceItem pit;
  pit.kind = core::ExperienceKind::negative;
  pit.text = world->pitfall("p");
  bank.negatives = {pit};

  eval::ValidationOutcome out =
      eval::validate_experiences(world->problem("p"), bank, judge, 99);
  CHECK(out.positive_verdicts == std::vector<bool>{true, false});
  CHECK(out.negative_verdicts == std::vector<bool>{true});
  REQUIRE(out.positive_accuracy.has_value());
  CHECK(*out.positive_accuracy == doctest::Approx(0.5));
  REQUIRE(out.negative_accuracy.has_value());
  CHECK(*out.negative_accuracy == doctest::Approx(1.0));

  // empty sides are reported as absent rather than zero
  core::ExperienceBank empty;
  out = eval::validate_experiences(world->problem("p"), empty, judge, 99);
  CHECK(!out.positive_accuracy.has_value());
  CHECK(!out.negative_accuracy.has_value());
  CHECK(out.positive_verdicts.empty());
}
