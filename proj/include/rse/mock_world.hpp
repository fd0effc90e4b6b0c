#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rse/backend.hpp"
#include "rse/core.hpp"
#include "rse/rng.hpp"

namespace rse::backend {

// A synthetic problem instance for the closed-loop oracle. Each of the L
// conclusions has a canonical sentence carrying the literal marker token
// [[C<j>]]; a reply solves the problem iff all L markers are present, in
// which case it boxes `gold`.
struct MockProblem {
  int conclusions = 0;
  std::vector<double> p;
  std::vector<std::string> sentences;
  std::string gold;
  std::string statement;
};

// Deterministic world shared by every mock call of a run. Solver calls
// behave as a verified-rollout oracle: markers already present in the prompt
// persist, missing marker j is emitted independently with probability p[j],
// draws are made in conclusion order from the caller's stream. Distiller and
// validator calls are answered structurally (see MockBackend).
class MockWorld {
 public:
  explicit MockWorld(std::uint64_t seed) : seed_(seed) {}

  // p may hold one shared probability or one entry per conclusion. Empty
  // statement and gold are synthesized deterministically from (seed, id).
  void add_problem(const std::string& id, int conclusions, std::vector<double> p,
                   std::string gold = "", std::string statement = "");

  const MockProblem& at(const std::string& id) const;  // BackendError if unknown
  core::Problem problem(const std::string& id) const;
  std::vector<std::string> ids() const;

  // The problem whose statement occurs verbatim in `text`; BackendError when
  // none or several match.
  const std::string& resolve(std::string_view text) const;

  static std::string marker(int j);  // "[[C<j>]]", 1-based

  // Indices (1-based) of this problem's markers occurring in `text`.
  std::set<int> markers_in(const MockProblem& problem, std::string_view text) const;

  // Canonical pitfall sentence the mock distiller reports for failed
  // attempts on this problem.
  std::string pitfall(const std::string& id) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_ = 0;
  std::map<std::string, MockProblem> problems_;
};

// Core oracle step, exposed for direct property testing: persistence of
// `injected` markers plus independent emission of the rest, then the boxed
// verdict. Consumes stream.uniform_at(j) for j = 1..L.
Completion oracle_complete(const MockWorld& world, const std::string& id,
                           const std::set<int>& injected, const rng::Stream& stream);

// Backend over a MockWorld. Dispatches on prompt shape: distillation
// requests get structural JSON extraction of markers from the attempt,
// validation requests get marker/arrow-based verdicts, everything else is a
// solver call routed through oracle_complete with the call seed as stream
// key.
class MockBackend final : public Backend {
 public:
  MockBackend(BackendProfile profile, std::shared_ptr<const MockWorld> world);

 protected:
  Completion complete(const std::string& system, const std::string& user,
                      std::uint64_t seed, int prompt_tokens) override;

 private:
  std::shared_ptr<const MockWorld> world_;
};

}  // namespace rse::backend
