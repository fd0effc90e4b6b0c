#include "rse/mock_world.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rse/errors.hpp"
#include "rse/tokens.hpp"

namespace rse::backend {

namespace {

using nlohmann::ordered_json;

// Filler vocabulary for canonical conclusion sentences. Word choice is
// keyed by (world seed, problem id, conclusion index), so distinct
// conclusions read as unrelated text while repeats stay byte-identical --
// exactly what the dedup stage needs to tell apart.
constexpr std::array<std::string_view, 48> kVocab = {
    "lattice",   "residue",   "bound",      "kernel",   "modulus",  "invariant",
    "closure",   "pivot",     "norm",       "cycle",    "degree",   "quotient",
    "partition", "spectrum",  "orbit",      "fixpoint", "basis",    "rank",
    "trace",     "parity",    "index",      "measure",  "density",  "interval",
    "operator",  "gradient",  "simplex",    "vertex",   "edge",     "flow",
    "capacity",  "potential", "recurrence", "series",   "limit",    "root",
    "factor",    "divisor",   "estimate",   "witness",  "certificate", "chain",
    "cut",       "matching",  "cover",      "path",     "weight",   "signature"};

std::string salad(std::uint64_t key, int words) {
  std::ostringstream out;
  for (int k = 0; k < words; ++k) {
    if (k) out << ' ';
    out << kVocab[rng::combine(key, static_cast<std::uint64_t>(k)) % kVocab.size()];
  }
  return out.str();
}

constexpr std::string_view kDistillerHead = "You are a Strategic Reasoning Distiller";
constexpr std::string_view kValidatorMark = "rigorous mathematical validator";

}  // namespace

std::string MockWorld::marker(int j) { return "[[C" + std::to_string(j) + "]]"; }

void MockWorld::add_problem(const std::string& id, int conclusions,
                            std::vector<double> p, std::string gold,
                            std::string statement) {
  if (id.empty()) throw ConfigError("mock problem needs an id");
  if (problems_.count(id)) throw ConfigError("duplicate mock problem id '" + id + "'");
  if (conclusions < 1) throw ConfigError("mock problem needs at least one conclusion");
  if (p.size() == 1) p.assign(conclusions, p[0]);
  if (static_cast<int>(p.size()) != conclusions) {
    throw ConfigError("mock problem '" + id + "' needs one probability or one per conclusion");
  }
  for (double v : p) {
    if (!(v > 0.0 && v < 1.0)) {
      throw ConfigError("mock emission probabilities must lie in (0, 1)");
    }
  }
  const std::uint64_t id_key = rng::hash_label(id);
  if (gold.empty()) {
    gold = std::to_string(100 + rng::derive(seed_, {id_key, 0x601d}) % 900);
  }
  if (statement.empty()) {
    std::ostringstream s;
    s << "Instance " << id << ": determine the certified target value. Every hidden "
      << "intermediate conclusion must be explicitly established before the final "
      << "result counts.";
    statement = s.str();
  }
  for (const auto& [other_id, other] : problems_) {
    if (other.statement.find(statement) != std::string::npos ||
        statement.find(other.statement) != std::string::npos) {
      throw ConfigError("statement of mock problem '" + id + "' overlaps with '" +
                        other_id + "'; prompt resolution would be ambiguous");
    }
  }

  MockProblem problem;
  problem.conclusions = conclusions;
  problem.p = std::move(p);
  problem.gold = std::move(gold);
  problem.statement = std::move(statement);
  problem.sentences.reserve(conclusions);
  for (int j = 1; j <= conclusions; ++j) {
    std::uint64_t key = rng::derive(seed_, {id_key, static_cast<std::uint64_t>(j)});
    problem.sentences.push_back(marker(j) + " " + salad(key, 10) + ".");
  }
  problems_.emplace(id, std::move(problem));
}

const MockProblem& MockWorld::at(const std::string& id) const {
  auto it = problems_.find(id);
  if (it == problems_.end()) throw BackendError("unknown mock problem id '" + id + "'");
  return it->second;
}

core::Problem MockWorld::problem(const std::string& id) const {
  const MockProblem& mp = at(id);
  return core::Problem{id, mp.statement, mp.gold};
}

std::vector<std::string> MockWorld::ids() const {
  std::vector<std::string> out;
  out.reserve(problems_.size());
  for (const auto& [id, _] : problems_) out.push_back(id);
  return out;
}

const std::string& MockWorld::resolve(std::string_view text) const {
  const std::string* found = nullptr;
  for (const auto& [id, problem] : problems_) {
    if (text.find(problem.statement) == std::string_view::npos) continue;
    if (found) {
      throw BackendError("prompt matches several mock problems ('" + *found +
                         "' and '" + id + "')");
    }
    found = &id;
  }
  if (!found) throw BackendError("prompt matches no mock problem statement");
  return *found;
}

std::set<int> MockWorld::markers_in(const MockProblem& problem,
                                    std::string_view text) const {
  std::set<int> out;
  for (int j = 1; j <= problem.conclusions; ++j) {
    if (text.find(marker(j)) != std::string_view::npos) out.insert(j);
  }
  return out;
}

std::string MockWorld::pitfall(const std::string& id) const {
  at(id);  // validate
  return "Declaring instance " + id +
         " solved before certifying every required conclusion -> Fatal Logic Flaw -> "
         "the boxed value is unsupported and the attempt collapses.";
}

Completion oracle_complete(const MockWorld& world, const std::string& id,
                           const std::set<int>& injected, const rng::Stream& stream) {
  const MockProblem& mp = world.at(id);
  for (int j : injected) {
    if (j < 1 || j > mp.conclusions) {
      throw BackendError("injected conclusion index " + std::to_string(j) +
                         " is out of range for '" + id + "'");
    }
  }

  // Persistence plus independent emission; one draw per conclusion, in
  // conclusion order, whether needed or not, so outcomes are coupled across
  // different injected sets under the same stream.
  std::vector<int> present;
  for (int j = 1; j <= mp.conclusions; ++j) {
    double u = stream.uniform_at(static_cast<std::uint64_t>(j));
    if (injected.count(j) || u < mp.p[j - 1]) present.push_back(j);
  }

  const bool solved = static_cast<int>(present.size()) == mp.conclusions;
  std::ostringstream reasoning;
  reasoning << "Working on instance " << id << ". Re-deriving the required conclusions "
            << "from the definitions; this pass establishes " << present.size() << " of "
            << mp.conclusions << ".";
  std::ostringstream final_text;
  for (int j : present) final_text << mp.sentences[j - 1] << '\n';
  final_text << "Final answer: \\boxed{" << (solved ? mp.gold : "WRONG") << "}";

  Completion out;
  out.reasoning = reasoning.str();
  out.final_text = final_text.str();
  out.finish = core::Finish::stop;
  return out;
}

MockBackend::MockBackend(BackendProfile profile, std::shared_ptr<const MockWorld> world)
    : Backend(std::move(profile)), world_(std::move(world)) {
  if (!world_) throw ConfigError("MockBackend needs a world");
}

Completion MockBackend::complete(const std::string& system, const std::string& user,
                                 std::uint64_t seed, int /*prompt_tokens*/) {
  Completion out;
  if (user.rfind(kDistillerHead, 0) == 0) {
    // Distillation: report exactly the conclusion sentences present in the
    // attempt; a failed attempt also yields the problem's canonical pitfall.
    std::size_t attempt_at = user.rfind("Student's Attempt:\n");
    if (attempt_at == std::string::npos) {
      throw BackendError("distillation prompt has no attempt section");
    }
    std::string_view attempt = std::string_view(user).substr(attempt_at + 19);
    const std::string& id = world_->resolve(user);
    const MockProblem& mp = world_->at(id);
    ordered_json reply;
    reply["verified_propositions"] = ordered_json::array();
    for (int j : world_->markers_in(mp, attempt)) {
      reply["verified_propositions"].push_back(mp.sentences[j - 1]);
    }
    reply["critical_pitfalls"] = ordered_json::array();
    if (attempt.find("\\boxed{" + mp.gold + "}") == std::string_view::npos) {
      reply["critical_pitfalls"].push_back(world_->pitfall(id));
    }
    out.final_text = reply.dump();
  } else if (system.find(kValidatorMark) != std::string::npos) {
    // Validation: a statement passes iff it carries one of the problem's
    // markers (a genuine proposition) or the pitfall arrow convention.
    const std::string& id = world_->resolve(user);
    const MockProblem& mp = world_->at(id);
    std::size_t list_at = user.find("items):\n");
    std::size_t list_end = user.find("\n\nPlease analyze");
    if (list_at == std::string::npos || list_end == std::string::npos ||
        list_end < list_at) {
      throw BackendError("validation prompt has no statement list");
    }
    std::string_view list = std::string_view(user).substr(list_at + 8, list_end - list_at - 8);
    std::ostringstream verdicts;
    bool first = true;
    std::size_t start = 0;
    while (start < list.size()) {
      std::size_t nl = list.find('\n', start);
      if (nl == std::string_view::npos) nl = list.size();
      std::string_view line = list.substr(start, nl - start);
      if (!line.empty()) {
        bool ok = !world_->markers_in(mp, line).empty() ||
                  line.find("->") != std::string_view::npos;
        verdicts << (first ? "" : ", ") << (ok ? "True" : "False");
        first = false;
      }
      start = nl + 1;
    }
    out.final_text = "Checked each statement against instance " + id + ".\n<decision>[" +
                     verdicts.str() + "]</decision>";
  } else {
    // Solver: verified-rollout oracle with persistence of whatever markers
    // the prompt carries (bank items, references, prior attempts).
    const std::string& id = world_->resolve(user);
    const MockProblem& mp = world_->at(id);
    rng::Stream stream{seed, 0};
    out = oracle_complete(*world_, id, world_->markers_in(mp, user), stream);
  }

  // Emulate generation cut-off under tiny max_tokens budgets.
  int reasoning_tokens = tokens::count(out.reasoning);
  int final_tokens = tokens::count(out.final_text);
  if (reasoning_tokens + final_tokens > profile_.max_tokens) {
    out.finish = core::Finish::length;
    int final_budget = profile_.max_tokens - reasoning_tokens;
    if (final_budget <= 0) {
      out.reasoning = std::string(tokens::truncate(out.reasoning, profile_.max_tokens));
      out.final_text.clear();
    } else {
      out.final_text = std::string(tokens::truncate(out.final_text, final_budget));
    }
  }
  return out;
}

}  // namespace rse::backend
