#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rse/core.hpp"
#include "rse/errors.hpp"
#include "rse/rng.hpp"
#include "rse/tokens.hpp"

using namespace rse;

TEST_CASE("token counting treats word runs and punctuation separately") {
  CHECK(tokens::count("") == 0);
  CHECK(tokens::count("a b c") == 3);
  CHECK(tokens::count("hello") == 1);
  CHECK(tokens::count("hello, world!") == 4);     // hello , world !
  CHECK(tokens::count("x2 + 3y = 7") == 5);       // x2, +, 3y, =, 7
  CHECK(tokens::count("\\boxed{42}") == 5);       // \ boxed { 42 }
  CHECK(tokens::count("  spaced\t\nout  ") == 2);
  CHECK(tokens::count("a_b") == 3);               // underscore is punctuation
}

TEST_CASE("token truncation keeps a prefix with the requested count") {
  std::string text = "one two three four five";
  CHECK(tokens::truncate(text, 3) == "one two three ");
  CHECK(tokens::count(tokens::truncate(text, 3)) == 3);
  CHECK(tokens::truncate(text, 50) == text);
  CHECK(tokens::truncate(text, 0).empty());
  CHECK(tokens::truncate(text, -2).empty());
  CHECK(tokens::count(tokens::truncate("\\boxed{42} end", 4)) == 4);
}

TEST_CASE("truncation count is idempotent over random strings") {
  rng::Stream stream{rng::derive(99, {1}), 0};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    int length = static_cast<int>(stream.next_bits() % 120);
    for (int i = 0; i < length; ++i) {
      text += static_cast<char>(' ' + stream.next_bits() % 95);
    }
    int total = tokens::count(text);
    int limit = static_cast<int>(stream.next_bits() % 30);
    std::string_view prefix = tokens::truncate(text, limit);
    CHECK(tokens::count(prefix) == std::min(total, limit));
    CHECK(text.substr(0, prefix.size()) == prefix);
  }
}

TEST_CASE("stream draws are pure functions of key and counter") {
  rng::Stream a{rng::derive(3, {7, 9}), 0};
  rng::Stream b{rng::derive(3, {7, 9}), 0};
  for (int i = 0; i < 16; ++i) CHECK(a.next_uniform() == b.uniform_at(i));
  CHECK(rng::derive(3, {7, 9}) != rng::derive(3, {9, 7}));  // order matters
  CHECK(rng::derive(3, {7}) != rng::derive(4, {7}));
  double u = rng::to_unit(rng::splitmix(123));
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
}

TEST_CASE("strategy names round-trip and unknown names are rejected") {
  for (auto s : {core::Strategy::standard, core::Strategy::majority_vote,
                 core::Strategy::self_refine, core::Strategy::pacore, core::Strategy::rse}) {
    CHECK(core::strategy_from_name(core::strategy_name(s)) == s);
  }
  CHECK_THROWS_AS(core::strategy_from_name("beam_search"), ConfigError);
  CHECK_THROWS_AS(core::strategy_from_name(""), ConfigError);
}

TEST_CASE("config validation enforces shape and ranges") {
  core::SearchConfig ok;
  ok.rounds = 2;
  ok.batch_sizes = {4, 8};
  CHECK_NOTHROW(core::validate_config(ok));

  core::SearchConfig bad = ok;
  bad.batch_sizes = {4};
  CHECK_THROWS_AS(core::validate_config(bad), ConfigError);

  bad = ok;
  bad.batch_sizes = {4, 0};
  CHECK_THROWS_AS(core::validate_config(bad), ConfigError);

  bad = ok;
  bad.tau = 1.5;
  CHECK_THROWS_AS(core::validate_config(bad), ConfigError);
  bad.tau = -0.1;
  CHECK_THROWS_AS(core::validate_config(bad), ConfigError);
  bad.tau = 1.0;  // boundary included
  CHECK_NOTHROW(core::validate_config(bad));

  bad = ok;
  bad.groups = 0;
  CHECK_THROWS_AS(core::validate_config(bad), ConfigError);

  bad = ok;
  bad.ref_truncate = 0;
  CHECK_THROWS_AS(core::validate_config(bad), ConfigError);
}

TEST_CASE("record_round appends in order and rejects mismatches") {
  core::SearchState state;
  core::IterationReport r0;
  r0.round = 0;
  state = core::record_round(std::move(state), {core::Rollout{}}, r0);
  CHECK(state.current_round == 1);
  CHECK(state.rounds.size() == 1);

  core::IterationReport r1;
  r1.round = 1;
  state = core::record_round(std::move(state), {}, r1);  // degenerate empty round
  CHECK(state.current_round == 2);
  CHECK(state.rounds[1].rollouts.empty());

  core::IterationReport r5;
  r5.round = 5;
  CHECK_THROWS_AS(core::record_round(std::move(state), {}, r5), ConfigError);
}

TEST_CASE("bank sizes track both sides") {
  core::ExperienceBank bank;
  CHECK(bank.empty());
  bank.positives.push_back({core::ExperienceKind::positive, "p", {}, {}});
  bank.negatives.push_back({core::ExperienceKind::negative, "n", {}, {}});
  bank.negatives.push_back({core::ExperienceKind::negative, "m", {}, {}});
  CHECK(!bank.empty());
  CHECK(bank.sizes() == std::pair<int, int>{1, 2});
}
