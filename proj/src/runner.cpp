#include "rse/runner.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#include "rse/errors.hpp"
#include "rse/eval.hpp"
#include "rse/mock_world.hpp"
#include "rse/prompts.hpp"
#include "rse/strategies.hpp"
#include "rse/theory.hpp"

namespace rse::runner {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + context);
    }
  }
}

template <typename T>
T need(const json& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key)) throw ConfigError(context + " needs '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + key + "' in " + context + " has the wrong type");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& context) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + key + "' in " + context + " has the wrong type");
  }
}

std::vector<double> probability_list(const json& value, const std::string& context) {
  std::vector<double> p;
  if (value.is_number()) {
    p.push_back(value.get<double>());
  } else if (value.is_array()) {
    for (const json& x : value) {
      if (!x.is_number()) throw ConfigError("'p' in " + context + " must hold numbers");
      p.push_back(x.get<double>());
    }
  } else {
    throw ConfigError("'p' in " + context + " must be a number or a list");
  }
  return p;
}

backend::BackendProfile parse_profile(const json& obj) {
  check_keys(obj,
             {"name", "kind", "model", "endpoint", "api_key_env", "temperature", "top_p",
              "top_k", "max_tokens", "context_window", "params", "reasoning_split",
              "retry_limit", "retry_backoff_ms"},
             "backend profile");
  backend::BackendProfile profile;
  profile.name = need<std::string>(obj, "name", "backend profile");
  const std::string kind = get_or<std::string>(obj, "kind", "mock", "backend profile");
  if (kind == "mock") {
    profile.kind = backend::Kind::mock;
  } else if (kind == "http") {
    profile.kind = backend::Kind::http;
  } else {
    throw ConfigError("unknown backend kind '" + kind + "'");
  }
  profile.model = get_or<std::string>(obj, "model", "", "backend profile");
  profile.endpoint = get_or<std::string>(obj, "endpoint", "", "backend profile");
  profile.api_key_env = get_or<std::string>(obj, "api_key_env", "", "backend profile");
  profile.temperature = get_or<double>(obj, "temperature", profile.temperature, "backend profile");
  profile.top_p = get_or<double>(obj, "top_p", profile.top_p, "backend profile");
  profile.top_k = get_or<int>(obj, "top_k", profile.top_k, "backend profile");
  profile.max_tokens = get_or<int>(obj, "max_tokens", profile.max_tokens, "backend profile");
  profile.context_window =
      get_or<int>(obj, "context_window", profile.context_window, "backend profile");
  if (obj.contains("params")) profile.params = need<double>(obj, "params", "backend profile");
  profile.reasoning_split =
      get_or<std::string>(obj, "reasoning_split", "", "backend profile");
  profile.retry_limit = get_or<int>(obj, "retry_limit", profile.retry_limit, "backend profile");
  profile.retry_backoff_ms =
      get_or<int>(obj, "retry_backoff_ms", profile.retry_backoff_ms, "backend profile");
  return backend::validate_profile(std::move(profile));
}

dedup::Embedder parse_embedder(const json& obj, std::uint64_t default_seed) {
  check_keys(obj, {"kind", "endpoint", "model", "dimension", "seed"}, "embedder");
  dedup::Embedder embedder;
  embedder.seed = default_seed;
  const std::string kind = get_or<std::string>(obj, "kind", "test_hash", "embedder");
  if (kind == "test_hash") {
    embedder.kind = dedup::EmbedderKind::test_hash;
  } else if (kind == "http_service") {
    embedder.kind = dedup::EmbedderKind::http_service;
  } else {
    throw ConfigError("unknown embedder kind '" + kind + "'");
  }
  embedder.endpoint = get_or<std::string>(obj, "endpoint", "", "embedder");
  embedder.model = get_or<std::string>(obj, "model", "", "embedder");
  embedder.dimension = get_or<int>(obj, "dimension", embedder.dimension, "embedder");
  embedder.seed = get_or<std::uint64_t>(obj, "seed", embedder.seed, "embedder");
  if (embedder.kind == dedup::EmbedderKind::http_service && embedder.endpoint.empty()) {
    throw ConfigError("http_service embedder needs an endpoint");
  }
  if (embedder.dimension < 1) throw ConfigError("embedder dimension must be >= 1");
  return embedder;
}

}  // namespace

RunSpec load_run_spec(const std::string& path) {
  const fs::path config_path(path);
  const json file = read_json_file(config_path);
  if (!file.is_object()) throw ConfigError("run config must be a JSON object");
  check_keys(file,
             {"strategy", "seed", "rounds", "batch_sizes", "groups", "refs_per_group",
              "tau", "workers", "context_budget", "ref_truncate", "plain_first_round",
              "problems", "output_dir", "flops_factor", "validate_experiences",
              "persist_finals", "backend", "embedder", "mock_world"},
             "run config");

  RunSpec spec;
  core::SearchConfig& cfg = spec.config;
  cfg.strategy = core::strategy_from_name(need<std::string>(file, "strategy", "run config"));
  cfg.seed = get_or<std::uint64_t>(file, "seed", 0, "run config");
  cfg.batch_sizes = need<std::vector<int>>(file, "batch_sizes", "run config");
  cfg.rounds = get_or<int>(file, "rounds", static_cast<int>(cfg.batch_sizes.size()),
                           "run config");
  cfg.groups = get_or<int>(file, "groups", 1, "run config");
  cfg.refs_per_group = get_or<int>(file, "refs_per_group", cfg.refs_per_group, "run config");
  cfg.tau = get_or<double>(file, "tau", cfg.tau, "run config");
  cfg.workers = get_or<int>(file, "workers", cfg.workers, "run config");
  if (file.contains("context_budget")) {
    cfg.context_budget = need<int>(file, "context_budget", "run config");
  }
  if (file.contains("ref_truncate")) {
    cfg.ref_truncate = need<int>(file, "ref_truncate", "run config");
  }
  cfg.plain_first_round =
      get_or<bool>(file, "plain_first_round", cfg.plain_first_round, "run config");

  if (!file.contains("backend")) throw ConfigError("run config needs 'backend'");
  spec.profile = parse_profile(file.at("backend"));
  cfg.backend_profile = spec.profile.name;
  cfg = core::validate_config(std::move(cfg));

  spec.embedder = parse_embedder(file.value("embedder", json::object()), cfg.seed);

  const fs::path base = config_path.has_parent_path() ? config_path.parent_path() : ".";
  const fs::path problems(need<std::string>(file, "problems", "run config"));
  spec.problems_path = (problems.is_absolute() ? problems : base / problems).string();
  const fs::path out_dir(need<std::string>(file, "output_dir", "run config"));
  spec.output_dir = (out_dir.is_absolute() ? out_dir : base / out_dir).string();

  spec.flops_factor = get_or<double>(file, "flops_factor", 2.0, "run config");
  if (spec.flops_factor <= 0.0) throw ConfigError("flops_factor must be positive");
  spec.validate_experiences =
      get_or<bool>(file, "validate_experiences", false, "run config");
  spec.persist_finals = get_or<bool>(file, "persist_finals", true, "run config");

  if (file.contains("mock_world")) {
    const json& mock = file.at("mock_world");
    check_keys(mock, {"seed", "conclusions", "p"}, "mock_world");
    MockWorldSpec world;
    world.seed = get_or<std::uint64_t>(mock, "seed", cfg.seed, "mock_world");
    world.conclusions = get_or<int>(mock, "conclusions", world.conclusions, "mock_world");
    if (mock.contains("p")) world.p = probability_list(mock.at("p"), "mock_world");
    spec.mock = std::move(world);
  }
  if (spec.profile.kind == backend::Kind::mock && !spec.mock) {
    throw ConfigError("a mock backend needs a 'mock_world' section");
  }
  return spec;
}

namespace {

core::Problem parse_problem(const json& obj, std::map<std::string, json>& mock_overrides) {
  if (!obj.is_object()) throw ConfigError("each problem must be a JSON object");
  check_keys(obj, {"id", "statement", "gold_answer", "mock"}, "problem");
  core::Problem problem;
  problem.id = need<std::string>(obj, "id", "problem");
  problem.statement = get_or<std::string>(obj, "statement", "", "problem");
  if (obj.contains("gold_answer")) {
    problem.gold_answer = need<std::string>(obj, "gold_answer", "problem");
  }
  if (obj.contains("mock")) {
    const json& mock = obj.at("mock");
    check_keys(mock, {"conclusions", "p"}, "problem mock override");
    mock_overrides[problem.id] = mock;
  }
  return problem;
}

}  // namespace

std::vector<core::Problem> load_problems(const std::string& path) {
  std::map<std::string, json> ignored;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open problems file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();

  std::vector<core::Problem> problems;
  std::set<std::string> seen;
  auto add = [&](const json& obj) {
    core::Problem problem = parse_problem(obj, ignored);
    if (!seen.insert(problem.id).second) {
      throw ConfigError("duplicate problem id '" + problem.id + "'");
    }
    problems.push_back(std::move(problem));
  };

  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw ConfigError("problems file '" + path + "' is empty");
  if (text[first] == '[') {
    json arr;
    try {
      arr = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError("problems file is not valid JSON: " + std::string(e.what()));
    }
    for (const json& obj : arr) add(obj);
  } else {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        add(json::parse(line));
      } catch (const json::parse_error& e) {
        throw ConfigError("problems file line is not valid JSON: " + std::string(e.what()));
      }
    }
  }
  if (problems.empty()) throw ConfigError("problems file '" + path + "' holds no problems");
  return problems;
}

namespace {

// ---- run records ----------------------------------------------------------

ordered_json ledger_json(const eval::TokenLedger& ledger) {
  ordered_json out;
  out["distill_in"] = ledger.distill_in;
  out["distill_out"] = ledger.distill_out;
  out["reason_in"] = ledger.reason_in;
  out["reason_out"] = ledger.reason_out;
  out["t_in"] = ledger.t_in();
  out["t_out"] = ledger.t_out();
  if (ledger.flops) {
    out["flops"] = *ledger.flops;
  } else {
    out["flops"] = nullptr;
  }
  return out;
}

ordered_json report_json(const core::IterationReport& report) {
  ordered_json out;
  out["round"] = report.round;
  out["pass1"] = report.pass1;
  if (report.non_truncated_pass1) {
    out["non_truncated_pass1"] = *report.non_truncated_pass1;
  } else {
    out["non_truncated_pass1"] = nullptr;
  }
  out["truncation_rate"] = report.truncation_rate;
  out["answer_entropy"] = report.answer_entropy;
  out["bank_positives"] = report.bank_positives;
  out["bank_negatives"] = report.bank_negatives;
  out["ledger"] = ledger_json(report.ledger);
  return out;
}

ordered_json bank_json(const core::ExperienceBank& bank) {
  auto side = [](const std::vector<core::ExperienceItem>& items) {
    ordered_json arr = ordered_json::array();
    for (const core::ExperienceItem& item : items) {
      ordered_json entry;
      entry["text"] = item.text;
      entry["round"] = item.source.round;
      entry["group"] = item.source.group;
      entry["index"] = item.source.index;
      arr.push_back(std::move(entry));
    }
    return arr;
  };
  ordered_json out;
  out["positives"] = side(bank.positives);
  out["negatives"] = side(bank.negatives);
  return out;
}

core::ExperienceBank bank_from_json(const json& obj) {
  core::ExperienceBank bank;
  auto side = [&](const char* key, core::ExperienceKind kind,
                  std::vector<core::ExperienceItem>& items) {
    if (!obj.contains(key)) return;
    for (const json& entry : obj.at(key)) {
      core::ExperienceItem item;
      item.kind = kind;
      item.text = entry.value("text", "");
      item.source.round = entry.value("round", 0);
      item.source.group = entry.value("group", 0);
      item.source.index = entry.value("index", 0);
      items.push_back(std::move(item));
    }
  };
  side("positives", core::ExperienceKind::positive, bank.positives);
  side("negatives", core::ExperienceKind::negative, bank.negatives);
  return bank;
}

struct TaskState {
  int rounds_done = 0;
  core::ExperienceBank bank;
  std::vector<std::string> finals;
  bool finals_known = true;  // false once a record without finals is seen
};

// Parses records.jsonl for resume. Returns per-(problem, group) progress and
// drops a malformed trailing line (interrupted write) by rewriting the file.
std::map<std::pair<std::string, int>, TaskState> load_existing_records(
    const fs::path& path, const RunSpec& spec, const std::set<std::string>& known_ids) {
  std::map<std::pair<std::string, int>, TaskState> states;
  std::ifstream in(path);
  if (!in) return states;

  std::vector<std::string> good_lines;
  std::string line;
  bool truncated_tail = false;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error&) {
      if (in.peek() == std::char_traits<char>::eof()) {
        truncated_tail = true;  // interrupted final write; drop it
        break;
      }
      throw ParseError("records file '" + path.string() +
                       "' holds a malformed line before the end");
    }

    const std::string strategy = record.value("strategy", "");
    if (strategy != core::strategy_name(spec.config.strategy)) {
      throw ConfigError("records file was written by strategy '" + strategy +
                        "' but the config says '" +
                        std::string(core::strategy_name(spec.config.strategy)) + "'");
    }
    const std::string problem = record.value("problem", "");
    const int group = record.value("group", -1);
    const int round = record.value("round", -1);
    if (!known_ids.count(problem) || group < 0 || group >= spec.config.groups ||
        round < 0 || round >= spec.config.rounds) {
      throw ConfigError("records file does not match the configured run (problem '" +
                        problem + "', group " + std::to_string(group) + ", round " +
                        std::to_string(round) + ")");
    }

    TaskState& state = states[{problem, group}];
    if (round != state.rounds_done) {
      throw ConfigError("records for problem '" + problem + "' group " +
                        std::to_string(group) + " are not a contiguous round prefix");
    }
    state.rounds_done += 1;
    if (record.contains("bank") && record["bank"].is_object()) {
      state.bank = bank_from_json(record["bank"]);
    }
    state.finals.clear();
    bool all_finals = true;
    if (record.contains("rollouts")) {
      for (const json& r : record["rollouts"]) {
        if (r.contains("final") && r["final"].is_string()) {
          state.finals.push_back(r["final"].get<std::string>());
        } else {
          all_finals = false;
        }
      }
    }
    state.finals_known = all_finals;
    good_lines.push_back(line);
  }
  in.close();

  if (truncated_tail) {
    std::ofstream rewrite(path, std::ios::trunc);
    for (const std::string& good : good_lines) rewrite << good << '\n';
  }
  return states;
}

struct RoundPayload {
  core::RoundRecord record;
  std::optional<core::ExperienceBank> bank;  // rse snapshots only
  std::optional<eval::ValidationOutcome> validation;
};

ordered_json record_json(const RunSpec& spec, const core::Problem& problem, int group,
                         const RoundPayload& payload) {
  const core::RoundRecord& round_record = payload.record;
  ordered_json out;
  out["schema_version"] = 1;
  out["strategy"] = std::string(core::strategy_name(spec.config.strategy));
  out["problem"] = problem.id;
  if (problem.gold_answer) {
    out["gold"] = eval::normalize_answer(*problem.gold_answer);
  } else {
    out["gold"] = nullptr;
  }
  out["group"] = group;
  out["round"] = round_record.report.round;
  out["report"] = report_json(round_record.report);

  ordered_json rollouts = ordered_json::array();
  for (const core::Rollout& r : round_record.rollouts) {
    ordered_json entry;
    entry["index"] = r.index;
    entry["seed"] = r.seed_used;
    if (r.answer) {
      entry["answer"] = *r.answer;
    } else {
      entry["answer"] = nullptr;
    }
    if (problem.gold_answer) {
      entry["correct"] = eval::is_correct(r, *problem.gold_answer);
    } else {
      entry["correct"] = nullptr;
    }
    entry["truncated"] = r.truncated;
    entry["finish"] = std::string(core::finish_name(r.finish));
    entry["tokens_in"] = r.tokens_in;
    entry["tokens_out"] = r.tokens_out;
    if (spec.persist_finals) entry["final"] = r.final_text;
    rollouts.push_back(std::move(entry));
  }
  out["rollouts"] = std::move(rollouts);
  if (payload.bank) out["bank"] = bank_json(*payload.bank);
  if (payload.validation) {
    ordered_json v;
    if (payload.validation->positive_accuracy) {
      v["positive_accuracy"] = *payload.validation->positive_accuracy;
    } else {
      v["positive_accuracy"] = nullptr;
    }
    if (payload.validation->negative_accuracy) {
      v["negative_accuracy"] = *payload.validation->negative_accuracy;
    } else {
      v["negative_accuracy"] = nullptr;
    }
    out["validation"] = std::move(v);
  }
  return out;
}

// Applies the run-level FLOPs estimate to every round report.
void apply_flops(const RunSpec& spec, core::IterationReport& report) {
  if (spec.profile.params) {
    report.ledger.set_flops(*spec.profile.params, spec.flops_factor);
  }
}

std::vector<RoundPayload> run_task(const RunSpec& spec, const core::Problem& problem,
                                   int group, const TaskState& state,
                                   backend::Backend& backend, const dedup::Embedder& embedder,
                                   const core::SearchConfig& cfg) {
  std::vector<RoundPayload> payloads;
  const int start = state.rounds_done;
  if (start >= cfg.rounds) return payloads;
  if (start > 0 &&
      (cfg.strategy == core::Strategy::self_refine || cfg.strategy == core::Strategy::pacore) &&
      !state.finals_known) {
    throw ConfigError("cannot resume '" + problem.id +
                      "' without persisted finals; rerun with persist_finals=true");
  }

  strategies::GroupResult result;
  switch (cfg.strategy) {
    case core::Strategy::standard:
    case core::Strategy::majority_vote: {
      int n = 0;
      for (int k : cfg.batch_sizes) n += k;
      std::vector<core::Rollout> rollouts =
          strategies::run_standard(problem, cfg, n, backend, group, 0);
      core::IterationReport report;
      {
        eval::TokenLedger ledger;
        ledger.round = 0;
        for (const core::Rollout& r : rollouts) {
          ledger.reason_in += r.tokens_in;
          ledger.reason_out += r.tokens_out;
        }
        report = eval::build_report(0, rollouts, problem.gold_answer, {0, 0}, ledger);
      }
      result.group = group;
      result.rounds.push_back(core::RoundRecord{std::move(rollouts), report});
      break;
    }
    case core::Strategy::self_refine:
      result = strategies::run_self_refine_group(problem, cfg, backend, group, start,
                                                 state.finals);
      break;
    case core::Strategy::pacore:
      result = strategies::run_pacore_group(problem, cfg, backend, group, start,
                                            state.finals);
      break;
    case core::Strategy::rse:
      result = strategies::run_rse_group(problem, cfg, backend, embedder, group, start,
                                         state.bank);
      break;
  }

  for (std::size_t i = 0; i < result.rounds.size(); ++i) {
    RoundPayload payload;
    payload.record = std::move(result.rounds[i]);
    apply_flops(spec, payload.record.report);
    if (i < result.banks.size()) payload.bank = result.banks[i];
    payloads.push_back(std::move(payload));
  }

  if (spec.validate_experiences && cfg.strategy == core::Strategy::rse &&
      !payloads.empty() && payloads.back().bank && !payloads.back().bank->empty()) {
    payloads.back().validation = eval::validate_experiences(
        problem, *payloads.back().bank, backend, cfg.seed);
  }
  return payloads;
}

}  // namespace

int cmd_run(const std::string& config_path, std::ostream& log) {
  RunSpec spec = load_run_spec(config_path);
  std::vector<core::Problem> problems = load_problems(spec.problems_path);

  // Mock runs synthesize world-backed statements and gold answers, so the
  // engine and the oracle agree on both.
  std::shared_ptr<const backend::MockWorld> world;
  if (spec.profile.kind == backend::Kind::mock) {
    // Problem-file "mock" objects override the run-level defaults.
    std::map<std::string, json> overrides;
    {
      // Re-read the raw file to pick up overrides (load_problems validates).
      std::ifstream in(spec.problems_path);
      std::stringstream buffer;
      buffer << in.rdbuf();
      std::string text = buffer.str();
      std::size_t first = text.find_first_not_of(" \t\r\n");
      if (first != std::string::npos && text[first] == '[') {
        for (const json& obj : json::parse(text)) parse_problem(obj, overrides);
      } else {
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          parse_problem(json::parse(line), overrides);
        }
      }
    }
    auto mock_world = std::make_shared<backend::MockWorld>(spec.mock->seed);
    for (core::Problem& problem : problems) {
      int conclusions = spec.mock->conclusions;
      std::vector<double> p = spec.mock->p;
      auto it = overrides.find(problem.id);
      if (it != overrides.end()) {
        conclusions = get_or<int>(it->second, "conclusions", conclusions, "problem mock");
        if (it->second.contains("p")) {
          p = probability_list(it->second.at("p"), "problem mock");
        }
      }
      mock_world->add_problem(problem.id, conclusions, p,
                              problem.gold_answer.value_or(""), problem.statement);
      problem = mock_world->problem(problem.id);
    }
    world = mock_world;
  } else {
    for (const core::Problem& problem : problems) {
      if (problem.statement.empty()) {
        throw ConfigError("problem '" + problem.id + "' has no statement");
      }
    }
  }

  std::unique_ptr<backend::Backend> backend_ptr = backend::make_backend(spec.profile, world);

  fs::create_directories(spec.output_dir);
  const fs::path records_path = fs::path(spec.output_dir) / "records.jsonl";
  std::set<std::string> known_ids;
  for (const core::Problem& problem : problems) known_ids.insert(problem.id);
  std::map<std::pair<std::string, int>, TaskState> states =
      load_existing_records(records_path, spec, known_ids);

  // Canonical task order: problems in file order, groups ascending; each
  // task emits its missing rounds in ascending round order.
  struct Task {
    const core::Problem* problem;
    int group;
    TaskState state;
  };
  std::vector<Task> tasks;
  for (const core::Problem& problem : problems) {
    for (int g = 0; g < spec.config.groups; ++g) {
      auto it = states.find({problem.id, g});
      tasks.push_back(Task{&problem, g, it == states.end() ? TaskState{} : it->second});
    }
  }

  // When several tasks run side by side, rollout-level parallelism is folded
  // into task-level parallelism.
  core::SearchConfig inner = spec.config;
  const int task_count = static_cast<int>(tasks.size());
  int pool_size = 1;
  if (task_count > 1) {
    pool_size = std::min(spec.config.workers, task_count);
    inner.workers = 1;
  }

  std::vector<std::vector<RoundPayload>> outputs(task_count);
  std::vector<std::exception_ptr> failures(task_count);
  std::vector<char> done(task_count, 0);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<int> next{0};
  int written = 0;
  const int window = std::max(2 * pool_size, 16);  // backpressure for the writer

  auto worker = [&] {
    while (true) {
      int t = next.fetch_add(1);
      if (t >= task_count) return;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return t < written + window; });
      }
      try {
        outputs[t] = run_task(spec, *tasks[t].problem, tasks[t].group, tasks[t].state,
                              *backend_ptr, spec.embedder, inner);
      } catch (...) {
        failures[t] = std::current_exception();
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        done[t] = 1;
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(pool_size);
  for (int w = 0; w < pool_size; ++w) pool.emplace_back(worker);

  std::ofstream out(records_path, std::ios::app);
  if (!out) {
    for (std::thread& t : pool) t.join();
    throw ConfigError("cannot open '" + records_path.string() + "' for writing");
  }
  int skipped = 0, executed = 0;
  std::exception_ptr failure;
  for (int t = 0; t < task_count; ++t) {
    {
      std::unique_lock<std::mutex> lock(mu);
      cv.wait(lock, [&] { return done[t] != 0; });
    }
    if (failures[t] && !failure) failure = failures[t];
    if (failure) {
      std::lock_guard<std::mutex> lock(mu);
      written = task_count;  // release any waiting workers
      cv.notify_all();
      continue;
    }
    if (outputs[t].empty()) {
      ++skipped;
    } else {
      ++executed;
    }
    for (const RoundPayload& payload : outputs[t]) {
      out << record_json(spec, *tasks[t].problem, tasks[t].group, payload).dump() << '\n';
    }
    out.flush();
    outputs[t].clear();
    {
      std::lock_guard<std::mutex> lock(mu);
      written = t + 1;
    }
    cv.notify_all();
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  log << "run complete: " << executed << " task(s) executed, " << skipped
      << " already recorded, output in " << records_path.string() << "\n";
  return 0;
}

namespace {

// ---- reporting ------------------------------------------------------------

struct RowKey {
  std::string strategy;
  std::string problem;
  int round = 0;

  bool operator<(const RowKey& other) const {
    return std::tie(strategy, problem, round) <
           std::tie(other.strategy, other.problem, other.round);
  }
};

struct RowData {
  int rollouts = 0;
  int correct = 0;
  int non_truncated = 0;
  int non_truncated_correct = 0;
  int truncated = 0;
  std::vector<std::optional<std::string>> answers;
  std::optional<std::string> gold;
  bool has_gold = false;
  std::int64_t bank_positives = 0, bank_negatives = 0;
  int bank_reports = 0;
  std::int64_t t_in = 0, t_out = 0;
  double flops = 0.0;
  bool has_flops = false;
};

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void format_row(std::ostream& out, const std::string& strategy, const std::string& problem,
                int round, const RowData& row) {
  out << csv_escape(strategy) << ',' << csv_escape(problem) << ',' << round << ','
      << row.rollouts << ',';
  out << (row.rollouts ? static_cast<double>(row.correct) / row.rollouts : 0.0) << ',';
  if (row.non_truncated > 0) {
    out << static_cast<double>(row.non_truncated_correct) / row.non_truncated;
  }
  out << ',';
  out << (row.rollouts ? static_cast<double>(row.truncated) / row.rollouts : 0.0) << ',';
  out << eval::answer_entropy(row.answers) << ',';
  if (row.has_gold && row.gold) {
    std::optional<std::string> majority = eval::majority_vote(row.answers);
    out << (majority && *majority == *row.gold ? 1 : 0);
  }
  out << ',';
  if (row.bank_reports > 0) {
    out << static_cast<double>(row.bank_positives) / row.bank_reports << ','
        << static_cast<double>(row.bank_negatives) / row.bank_reports << ',';
  } else {
    out << "0,0,";
  }
  out << row.t_in << ',' << row.t_out << ',';
  if (row.has_flops) out << row.flops;
  out << '\n';
}

}  // namespace

int cmd_report(const std::string& results_dir, std::ostream& out) {
  if (!fs::exists(results_dir)) {
    throw ConfigError("results directory '" + results_dir + "' does not exist");
  }
  std::vector<fs::path> record_files;
  for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "records.jsonl") {
      record_files.push_back(entry.path());
    }
  }
  std::sort(record_files.begin(), record_files.end());

  std::map<RowKey, RowData> rows;
  for (const fs::path& file : record_files) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json record;
      try {
        record = json::parse(line);
      } catch (const json::parse_error&) {
        throw ParseError("malformed record line in '" + file.string() + "'");
      }
      RowKey key{record.value("strategy", "?"), record.value("problem", "?"),
                 record.value("round", 0)};
      RowData& row = rows[key];
      if (record.contains("gold") && record["gold"].is_string()) {
        row.gold = record["gold"].get<std::string>();
        row.has_gold = true;
      }
      for (const json& r : record.value("rollouts", json::array())) {
        row.rollouts += 1;
        if (r.value("truncated", false)) row.truncated += 1;
        bool correct = r.contains("correct") && r["correct"].is_boolean() &&
                       r["correct"].get<bool>();
        row.correct += correct;
        if (!r.value("truncated", false)) {
          row.non_truncated += 1;
          row.non_truncated_correct += correct;
        }
        if (r.contains("answer") && r["answer"].is_string()) {
          row.answers.push_back(r["answer"].get<std::string>());
        } else {
          row.answers.push_back(std::nullopt);
        }
      }
      if (record.contains("report")) {
        const json& report = record["report"];
        row.bank_positives += report.value("bank_positives", 0);
        row.bank_negatives += report.value("bank_negatives", 0);
        row.bank_reports += 1;
        const json ledger = report.value("ledger", json::object());
        row.t_in += ledger.value("t_in", std::int64_t{0});
        row.t_out += ledger.value("t_out", std::int64_t{0});
        if (ledger.contains("flops") && ledger["flops"].is_number()) {
          row.flops += ledger["flops"].get<double>();
          row.has_flops = true;
        }
      }
    }
  }

  std::ostringstream csv;
  csv.precision(10);
  csv << "strategy,problem,round,rollouts,pass1,non_truncated_pass1,truncation_rate,"
         "answer_entropy,majority_correct,bank_positives,bank_negatives,t_in,t_out,"
         "flops\n";
  for (const auto& [key, row] : rows) {
    format_row(csv, key.strategy, key.problem, key.round, row);
  }

  // Cross-problem aggregate per (strategy, round): pooled rollouts, summed
  // ledgers. Majority voting is per problem, so the aggregate leaves it out.
  std::map<std::pair<std::string, int>, RowData> totals;
  for (const auto& [key, row] : rows) {
    RowData& total = totals[{key.strategy, key.round}];
    total.rollouts += row.rollouts;
    total.correct += row.correct;
    total.non_truncated += row.non_truncated;
    total.non_truncated_correct += row.non_truncated_correct;
    total.truncated += row.truncated;
    total.answers.insert(total.answers.end(), row.answers.begin(), row.answers.end());
    total.bank_positives += row.bank_positives;
    total.bank_negatives += row.bank_negatives;
    total.bank_reports += row.bank_reports;
    total.t_in += row.t_in;
    total.t_out += row.t_out;
    total.flops += row.flops;
    total.has_flops = total.has_flops || row.has_flops;
    total.has_gold = false;
  }
  for (const auto& [key, row] : totals) {
    format_row(csv, key.first, "ALL", key.second, row);
  }

  const std::string text = csv.str();
  std::ofstream summary(fs::path(results_dir) / "summary.csv");
  summary << text;
  out << text;
  return 0;
}

int cmd_theory(const TheoryArgs& args, std::ostream& out) {
  theory::CoverageModel model = theory::make_uniform_model(args.conclusions, args.p);
  theory::validate_model(model);
  if (args.n_max < 1) throw ConfigError("n_max must be >= 1");
  if (args.trials < 1) throw ConfigError("trials must be >= 1");

  std::vector<theory::CurvePoint> curve =
      theory::success_curves(model, args.n_max, args.trials, args.seed);
  const std::string csv = theory::curves_csv(curve);
  if (!args.out_path.empty()) {
    std::ofstream file(args.out_path);
    if (!file) throw ConfigError("cannot open '" + args.out_path + "' for writing");
    file << csv;
  }
  out << csv;

  theory::SampleComplexity bounds = theory::sample_complexity(model, args.delta);
  out.precision(10);
  out << "# delta = " << args.delta << "\n";
  out << "# n_rse = " << bounds.n_rse << "\n";
  out << "# n_base = " << bounds.n_base << "\n";
  out << "# closed_rse(n_rse) = "
      << theory::closed_form(model, theory::Procedure::rse,
                             static_cast<int>(bounds.n_rse))
      << "\n";
  return 0;
}

}  // namespace rse::runner
