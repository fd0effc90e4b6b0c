#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rse/core.hpp"

namespace rse::prompts {

// A fully rendered request: system text, user text, and the approximate
// token count of both (system + user) under tokens::count.
struct PromptBundle {
  std::string system;
  std::string user;
  int rendered_tokens = 0;
};

PromptBundle make_bundle(std::string system, std::string user);

// Shared system prompt for all solver-side calls.
std::string render_system();

// Reference-conditioned recombination prompt. `refs` are prior final
// responses, oldest first; each is numbered and optionally truncated to
// ref_truncate tokens. Throws ConfigError when refs is empty.
std::string render_pacore(const core::Problem& problem,
                          const std::vector<std::string>& refs,
                          std::optional<int> ref_truncate = std::nullopt);

// Distillation prompt: asks for verified propositions and critical pitfalls
// extracted from one attempt, as raw JSON.
std::string render_distiller(std::string_view question, std::string_view attempt);

// Parsed distiller reply.
struct DistilledExperience {
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
};

// Accepts raw JSON, optionally wrapped in markdown code fences, with one
// repair pass for unescaped LaTeX backslashes. Missing keys yield empty
// lists; entries must be strings. Throws ParseError when unrecoverable.
DistilledExperience parse_distiller_output(std::string_view text);

// Canonical JSON form of a distiller reply; parse_distiller_output is its
// inverse for any payload.
std::string serialize_distiller_output(const DistilledExperience& exp);

// Renders the bank as numbered "Verified Propositions" / "Critical
// Pitfalls" sections, "(none yet)" for an empty side.
std::string serialize_bank(const core::ExperienceBank& bank);

// Experience-conditioned solver prompt: the statement plus the serialized
// bank in the experience scaffold.
std::string render_solver(const core::Problem& problem, const core::ExperienceBank& bank);

// Self-contained single-reference refinement prompt (render_pacore with one
// reference and no cap).
std::string render_refine(const core::Problem& problem, const std::string& previous);

// Judge prompts for auditing bank quality.
std::string render_validation_system();
std::string render_validation(const core::Problem& problem,
                              const std::vector<std::string>& statements,
                              core::ExperienceKind kind);

// Extracts the bracketed verdict list from a judge reply. Requires exactly
// `expected` booleans; throws ParseError otherwise.
std::vector<bool> parse_validation(std::string_view text, int expected);

}  // namespace rse::prompts
