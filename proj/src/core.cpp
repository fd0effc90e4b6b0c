#include "rse/core.hpp"

#include <sstream>

#include "rse/errors.hpp"

namespace rse::core {

Strategy strategy_from_name(std::string_view name) {
  if (name == "standard") return Strategy::standard;
  if (name == "majority_vote") return Strategy::majority_vote;
  if (name == "self_refine") return Strategy::self_refine;
  if (name == "pacore") return Strategy::pacore;
  if (name == "rse") return Strategy::rse;
  throw ConfigError("unknown strategy: '" + std::string(name) + "'");
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::standard: return "standard";
    case Strategy::majority_vote: return "majority_vote";
    case Strategy::self_refine: return "self_refine";
    case Strategy::pacore: return "pacore";
    case Strategy::rse: return "rse";
  }
  return "unknown";
}

std::string_view finish_name(Finish f) {
  switch (f) {
    case Finish::stop: return "stop";
    case Finish::length: return "length";
    case Finish::error: return "error";
  }
  return "unknown";
}

std::string_view experience_kind_name(ExperienceKind k) {
  return k == ExperienceKind::positive ? "positive" : "negative";
}

SearchConfig validate_config(SearchConfig config) {
  if (config.rounds < 1) throw ConfigError("rounds must be >= 1");
  if (static_cast<int>(config.batch_sizes.size()) != config.rounds) {
    std::ostringstream msg;
    msg << "batch_sizes has " << config.batch_sizes.size() << " entries for "
        << config.rounds << " rounds";
    throw ConfigError(msg.str());
  }
  for (int k : config.batch_sizes) {
    if (k < 1) throw ConfigError("every batch size must be >= 1");
  }
  if (config.groups < 1) throw ConfigError("groups must be >= 1");
  if (config.refs_per_group < 1) throw ConfigError("refs_per_group must be >= 1");
  if (!(config.tau >= 0.0 && config.tau <= 1.0)) {
    throw ConfigError("tau must lie in [0, 1]");
  }
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  if (config.context_budget && *config.context_budget < 1) {
    throw ConfigError("context_budget must be >= 1 when set");
  }
  if (config.ref_truncate && *config.ref_truncate < 1) {
    throw ConfigError("ref_truncate must be >= 1 when set");
  }
  return config;
}

SearchState record_round(SearchState state, std::vector<Rollout> rollouts,
                         IterationReport report) {
  if (report.round != state.current_round) {
    std::ostringstream msg;
    msg << "recorded report for round " << report.round << " but state expects round "
        << state.current_round;
    throw ConfigError(msg.str());
  }
  state.rounds.push_back(RoundRecord{std::move(rollouts), std::move(report)});
  state.current_round += 1;
  return state;
}

}  // namespace rse::core
