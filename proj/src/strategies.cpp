#include "rse/strategies.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>

#include "rse/errors.hpp"
#include "rse/eval.hpp"
#include "rse/prompts.hpp"
#include "rse/rng.hpp"
#include "rse/tokens.hpp"

namespace rse::strategies {

namespace {

// Bounded parallel loop over [0, n). fn(i) runs on one of `workers` threads;
// the first captured exception is rethrown after all threads join.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t call_seed(const core::SearchConfig& config, const core::Problem& problem,
                        int group, int round, int index, std::string_view purpose) {
  return rng::derive(config.seed,
                     {rng::hash_label(problem.id), static_cast<std::uint64_t>(group),
                      static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(index),
                      rng::hash_label(purpose)});
}

core::Rollout make_rollout(int group, int round, int index, std::string prompt,
                           const backend::Completion& completion, std::uint64_t seed) {
  core::Rollout rollout;
  rollout.group = group;
  rollout.round = round;
  rollout.index = index;
  rollout.prompt = std::move(prompt);
  rollout.reasoning = completion.reasoning;
  rollout.final_text = completion.final_text;
  rollout.answer = eval::extract_answer(completion.final_text);
  rollout.finish = completion.finish;
  rollout.truncated = completion.finish == core::Finish::length || !rollout.answer;
  rollout.tokens_in = completion.tokens_in;
  rollout.tokens_out = completion.tokens_out;
  rollout.seed_used = seed;
  return rollout;
}

core::Rollout error_rollout(int group, int round, int index, std::string prompt,
                            std::uint64_t seed) {
  core::Rollout rollout;
  rollout.group = group;
  rollout.round = round;
  rollout.index = index;
  rollout.prompt = std::move(prompt);
  rollout.finish = core::Finish::error;
  rollout.truncated = true;
  rollout.seed_used = seed;
  return rollout;
}

// One guarded backend call; any backend failure degrades to an error rollout
// so the rest of the round proceeds.
core::Rollout guarded_call(backend::Backend& backend, const std::string& system,
                           const std::string& user, int group, int round, int index,
                           std::uint64_t seed) {
  try {
    backend::Completion completion = backend.chat_complete(system, user, seed);
    return make_rollout(group, round, index, user, completion, seed);
  } catch (const BackendError&) {
    return error_rollout(group, round, index, user, seed);
  }
}

// Measured reasoning-phase ledger: exact token traffic of this round's
// solver calls.
eval::TokenLedger reason_ledger(int round, const std::vector<core::Rollout>& rollouts) {
  eval::TokenLedger ledger;
  ledger.round = round;
  for (const core::Rollout& r : rollouts) {
    ledger.reason_in += r.tokens_in;
    ledger.reason_out += r.tokens_out;
  }
  return ledger;
}

// The tightest prompt-token budget in force: explicit config budget if any,
// never looser than what the context window leaves after generation.
int prompt_budget(const core::SearchConfig& config, const backend::BackendProfile& profile) {
  int window = profile.context_window - profile.max_tokens;
  if (config.context_budget) window = std::min(window, *config.context_budget);
  return window;
}

}  // namespace

std::vector<core::Rollout> run_standard(const core::Problem& problem,
                                        const core::SearchConfig& config, int n,
                                        backend::Backend& backend, int group, int round) {
  if (n < 1) throw ConfigError("standard sampling needs n >= 1");
  const std::string system = prompts::render_system();
  std::vector<core::Rollout> rollouts(n);
  parallel_for(n, config.workers, [&](int i) {
    std::uint64_t seed = call_seed(config, problem, group, round, i, "solve");
    rollouts[i] = guarded_call(backend, system, problem.statement, group, round, i, seed);
  });
  return rollouts;
}

RoundOutcome run_rse_round(const core::Problem& problem, const core::ExperienceBank& bank,
                           int round, int batch, int group, const core::SearchConfig& config,
                           backend::Backend& backend, const dedup::Embedder& embedder) {
  if (batch < 1) throw ConfigError("rse round needs a batch size >= 1");
  const std::string system = prompts::render_system();
  const std::string user = bank.empty() && config.plain_first_round
                               ? problem.statement
                               : prompts::render_solver(problem, bank);

  // Step 1: K concurrent rollouts against the shared experience-conditioned
  // prompt (byte-identical within the round; only seeds differ).
  std::vector<core::Rollout> rollouts(batch);
  parallel_for(batch, config.workers, [&](int i) {
    std::uint64_t seed = call_seed(config, problem, group, round, i, "solve");
    rollouts[i] = guarded_call(backend, system, user, group, round, i, seed);
  });

  // Step 2: distill every completed attempt. A distiller reply that fails to
  // parse drops only that attempt's contribution.
  std::vector<prompts::DistilledExperience> distilled(batch);
  std::vector<char> dropped(batch, 0);
  std::atomic<std::int64_t> distill_in{0}, distill_out{0};
  parallel_for(batch, config.workers, [&](int i) {
    if (rollouts[i].finish == core::Finish::error) return;
    const std::string attempt = rollouts[i].reasoning + "\n" + rollouts[i].final_text;
    const std::string duser = prompts::render_distiller(problem.statement, attempt);
    std::uint64_t seed = call_seed(config, problem, group, round, i, "distill");
    try {
      backend::Completion reply = backend.chat_complete("", duser, seed);
      distill_in += reply.tokens_in;
      distill_out += reply.tokens_out;
      distilled[i] = prompts::parse_distiller_output(reply.final_text);
    } catch (const ParseError&) {
      dropped[i] = 1;
    } catch (const BackendError&) {
      dropped[i] = 1;
    }
  });

  // Step 3: greedy admission per kind, candidates ordered by (rollout index,
  // extraction order) so reruns admit identically.
  std::vector<core::ExperienceItem> pos_candidates, neg_candidates;
  for (int i = 0; i < batch; ++i) {
    for (const std::string& text : distilled[i].positives) {
      if (text.empty()) continue;
      pos_candidates.push_back(core::ExperienceItem{
          core::ExperienceKind::positive, text, {round, group, i}, {}});
    }
    for (const std::string& text : distilled[i].negatives) {
      if (text.empty()) continue;
      neg_candidates.push_back(core::ExperienceItem{
          core::ExperienceKind::negative, text, {round, group, i}, {}});
    }
  }
  dedup::embed_missing(embedder, pos_candidates);
  dedup::embed_missing(embedder, neg_candidates);

  RoundOutcome outcome;
  outcome.bank = bank;
  dedup::embed_missing(embedder, outcome.bank.positives);
  dedup::embed_missing(embedder, outcome.bank.negatives);
  std::vector<core::ExperienceItem> admitted_pos =
      dedup::admit(outcome.bank.positives, std::move(pos_candidates), config.tau);
  std::vector<core::ExperienceItem> admitted_neg =
      dedup::admit(outcome.bank.negatives, std::move(neg_candidates), config.tau);
  for (core::ExperienceItem& item : admitted_pos) {
    outcome.bank.positives.push_back(std::move(item));
  }
  for (core::ExperienceItem& item : admitted_neg) {
    outcome.bank.negatives.push_back(std::move(item));
  }

  // Step 4: report with the measured ledger for both phases.
  eval::TokenLedger ledger = reason_ledger(round, rollouts);
  ledger.distill_in = distill_in.load();
  ledger.distill_out = distill_out.load();
  outcome.report = eval::build_report(round, rollouts, problem.gold_answer,
                                      outcome.bank.sizes(), ledger);
  outcome.rollouts = std::move(rollouts);
  for (char d : dropped) outcome.dropped_distills += d;
  return outcome;
}

GroupResult run_rse_group(const core::Problem& problem, const core::SearchConfig& config,
                          backend::Backend& backend, const dedup::Embedder& embedder,
                          int group, int start_round, core::ExperienceBank bank) {
  GroupResult result;
  result.group = group;
  for (int r = start_round; r < config.rounds; ++r) {
    RoundOutcome outcome = run_rse_round(problem, bank, r, config.batch_sizes[r], group,
                                         config, backend, embedder);
    bank = outcome.bank;
    result.rounds.push_back(core::RoundRecord{std::move(outcome.rollouts), outcome.report});
    result.banks.push_back(bank);
  }
  return result;
}

GroupResult run_self_refine_group(const core::Problem& problem,
                                  const core::SearchConfig& config,
                                  backend::Backend& backend, int group, int start_round,
                                  std::vector<std::string> previous_finals) {
  for (int k : config.batch_sizes) {
    if (k != config.batch_sizes[0]) {
      throw ConfigError("self_refine needs uniform batch sizes: refinement chains "
                        "pair rollout i with rollout i of the previous round");
    }
  }
  const int chains = config.batch_sizes[0];
  if (start_round > 0 && static_cast<int>(previous_finals.size()) != chains) {
    throw ConfigError("self_refine resume needs one previous final per chain");
  }
  const std::string system = prompts::render_system();

  GroupResult result;
  result.group = group;
  for (int r = start_round; r < config.rounds; ++r) {
    std::vector<core::Rollout> rollouts(chains);
    parallel_for(chains, config.workers, [&](int i) {
      std::uint64_t seed = call_seed(config, problem, group, r, i, "solve");
      const std::string user = previous_finals.empty()
                                   ? problem.statement
                                   : prompts::render_refine(problem, previous_finals[i]);
      rollouts[i] = guarded_call(backend, system, user, group, r, i, seed);
    });
    previous_finals.clear();
    previous_finals.reserve(chains);
    for (const core::Rollout& rollout : rollouts) {
      previous_finals.push_back(rollout.final_text);
    }
    core::IterationReport report =
        eval::build_report(r, rollouts, problem.gold_answer, {0, 0},
                           reason_ledger(r, rollouts));
    result.rounds.push_back(core::RoundRecord{std::move(rollouts), report});
  }
  return result;
}

GroupResult run_pacore_group(const core::Problem& problem, const core::SearchConfig& config,
                             backend::Backend& backend, int group, int start_round,
                             std::vector<std::string> previous_finals) {
  const std::string system = prompts::render_system();
  const int budget = prompt_budget(config, backend.profile());
  const int system_tokens = tokens::count(system);

  GroupResult result;
  result.group = group;
  for (int r = start_round; r < config.rounds; ++r) {
    const int batch = config.batch_sizes[r];
    std::vector<core::Rollout> rollouts(batch);

    std::string user;
    bool renderable = true;
    if (previous_finals.empty()) {
      user = problem.statement;
    } else {
      // Reference set: at most refs_per_group previous finals. Fit the
      // prompt into the budget by first applying the per-reference token
      // cap, then dropping references oldest-first.
      std::vector<std::string> refs = previous_finals;
      if (static_cast<int>(refs.size()) > config.refs_per_group) {
        refs.resize(config.refs_per_group);
      }
      std::optional<int> cap;
      while (true) {
        user = prompts::render_pacore(problem, refs, cap);
        if (system_tokens + tokens::count(user) <= budget) break;
        if (!cap && config.ref_truncate) {
          cap = config.ref_truncate;
          continue;
        }
        refs.erase(refs.begin());
        if (refs.empty()) {
          renderable = false;
          break;
        }
      }
    }

    parallel_for(batch, config.workers, [&](int i) {
      std::uint64_t seed = call_seed(config, problem, group, r, i, "solve");
      if (!renderable) {
        rollouts[i] = error_rollout(group, r, i, "", seed);
        return;
      }
      rollouts[i] = guarded_call(backend, system, user, group, r, i, seed);
    });

    previous_finals.clear();
    previous_finals.reserve(batch);
    for (const core::Rollout& rollout : rollouts) {
      previous_finals.push_back(rollout.final_text);
    }
    core::IterationReport report =
        eval::build_report(r, rollouts, problem.gold_answer, {0, 0},
                           reason_ledger(r, rollouts));
    result.rounds.push_back(core::RoundRecord{std::move(rollouts), report});
  }
  return result;
}

StrategyResult run_strategy(const core::Problem& problem, const core::SearchConfig& config,
                            backend::Backend& backend, const dedup::Embedder& embedder) {
  core::SearchConfig cfg = core::validate_config(config);
  StrategyResult result;
  result.groups.reserve(cfg.groups);
  for (int g = 0; g < cfg.groups; ++g) {
    switch (cfg.strategy) {
      case core::Strategy::standard:
      case core::Strategy::majority_vote: {
        // The whole budget runs as one iteration of independent attempts.
        int n = 0;
        for (int k : cfg.batch_sizes) n += k;
        std::vector<core::Rollout> rollouts = run_standard(problem, cfg, n, backend, g, 0);
        core::IterationReport report =
            eval::build_report(0, rollouts, problem.gold_answer, {0, 0},
                               reason_ledger(0, rollouts));
        GroupResult group_result;
        group_result.group = g;
        group_result.rounds.push_back(core::RoundRecord{std::move(rollouts), report});
        result.groups.push_back(std::move(group_result));
        break;
      }
      case core::Strategy::self_refine:
        result.groups.push_back(run_self_refine_group(problem, cfg, backend, g));
        break;
      case core::Strategy::pacore:
        result.groups.push_back(run_pacore_group(problem, cfg, backend, g));
        break;
      case core::Strategy::rse:
        result.groups.push_back(run_rse_group(problem, cfg, backend, embedder, g));
        break;
    }
  }
  return result;
}

}  // namespace rse::strategies
