#include "rse/prompts.hpp"

#include <cctype>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rse/errors.hpp"
#include "rse/tokens.hpp"
#include "rse_prompt_embedded.hpp"

namespace rse::prompts {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Replaces every occurrence of {{name}} in the template.
std::string fill(std::string text, std::string_view name, std::string_view value) {
  const std::string slot = "{{" + std::string(name) + "}}";
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
  return text;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drops one layer of markdown code fences (``` or ```json) around a payload.
std::string_view strip_fences(std::string_view s) {
  s = trim(s);
  if (s.substr(0, 3) != "```") return s;
  std::size_t first_nl = s.find('\n');
  if (first_nl == std::string_view::npos) return s;
  std::size_t closing = s.rfind("```");
  if (closing <= first_nl) return s;
  return trim(s.substr(first_nl + 1, closing - first_nl - 1));
}

// Doubles every backslash that does not start a valid JSON escape, turning
// raw LaTeX like \alpha or \sum into parseable string content. This pass
// only runs after a strict parse failed, where \b and \f are far more
// likely \boxed and \frac than backspace or form feed, so those two JSON
// escapes are deliberately doubled as well.
std::string escape_stray_backslashes(std::string_view s) {
  static constexpr std::string_view kEscapes = "\"\\/nrtu";
  std::string out;
  out.reserve(s.size() + 16);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 < s.size() && kEscapes.find(s[i + 1]) != std::string_view::npos) {
      out += s[i];
      out += s[i + 1];
      ++i;
    } else {
      out += "\\\\";
    }
  }
  return out;
}

std::vector<std::string> string_list(const json& value, const char* key) {
  std::vector<std::string> out;
  if (!value.contains(key)) return out;
  const json& arr = value.at(key);
  if (!arr.is_array()) {
    throw ParseError(std::string("distiller output field '") + key + "' is not a list");
  }
  for (const json& entry : arr) {
    if (!entry.is_string()) {
      throw ParseError(std::string("distiller output field '") + key +
                       "' holds a non-string entry");
    }
    out.push_back(entry.get<std::string>());
  }
  return out;
}

std::string numbered_list(const std::vector<std::string>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out << '\n';
    out << (i + 1) << ". " << items[i];
  }
  return out.str();
}

std::string numbered_items(const std::vector<core::ExperienceItem>& items) {
  std::vector<std::string> texts;
  texts.reserve(items.size());
  for (const core::ExperienceItem& item : items) texts.push_back(item.text);
  return numbered_list(texts);
}

}  // namespace

PromptBundle make_bundle(std::string system, std::string user) {
  int n = tokens::count(system) + tokens::count(user);
  return PromptBundle{std::move(system), std::move(user), n};
}

std::string render_system() { return std::string(embedded::kSystem); }

std::string render_pacore(const core::Problem& problem,
                          const std::vector<std::string>& refs,
                          std::optional<int> ref_truncate) {
  if (refs.empty()) {
    throw ConfigError("recombination prompt needs at least one reference response");
  }
  std::ostringstream blocks;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (i) blocks << '\n';
    std::string_view body = refs[i];
    if (ref_truncate) body = tokens::truncate(body, *ref_truncate);
    blocks << "Reference " << (i + 1) << ":\n" << body;
  }
  std::string text = fill(std::string(embedded::kPacore), "original_prompt",
                          problem.statement);
  return fill(std::move(text), "reference_blocks", blocks.str());
}

std::string render_refine(const core::Problem& problem, const std::string& previous) {
  return render_pacore(problem, {previous}, std::nullopt);
}

std::string render_distiller(std::string_view question, std::string_view attempt) {
  std::string text = fill(std::string(embedded::kDistiller), "question", question);
  return fill(std::move(text), "attempt", attempt);
}

DistilledExperience parse_distiller_output(std::string_view text) {
  std::string_view payload = strip_fences(text);
  if (payload.empty()) throw ParseError("distiller output is empty");
  json parsed;
  try {
    parsed = json::parse(payload);
  } catch (const json::parse_error&) {
    try {
      parsed = json::parse(escape_stray_backslashes(payload));
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("distiller output is not valid JSON: ") + e.what());
    }
  }
  if (!parsed.is_object()) throw ParseError("distiller output is not a JSON object");
  DistilledExperience exp;
  exp.positives = string_list(parsed, "verified_propositions");
  exp.negatives = string_list(parsed, "critical_pitfalls");
  return exp;
}

std::string serialize_distiller_output(const DistilledExperience& exp) {
  ordered_json out;
  out["verified_propositions"] = exp.positives;
  out["critical_pitfalls"] = exp.negatives;
  return out.dump();
}

std::string serialize_bank(const core::ExperienceBank& bank) {
  std::ostringstream out;
  out << "Verified Propositions:\n";
  out << (bank.positives.empty() ? "(none yet)" : numbered_items(bank.positives));
  out << "\n\nCritical Pitfalls:\n";
  out << (bank.negatives.empty() ? "(none yet)" : numbered_items(bank.negatives));
  return out.str();
}

std::string render_solver(const core::Problem& problem, const core::ExperienceBank& bank) {
  std::string text = fill(std::string(embedded::kSolver), "original_problem",
                          problem.statement);
  return fill(std::move(text), "content_of_experience_bank", serialize_bank(bank));
}

std::string render_validation_system() {
  return std::string(embedded::kValidationSystem);
}

std::string render_validation(const core::Problem& problem,
                              const std::vector<std::string>& statements,
                              core::ExperienceKind kind) {
  if (statements.empty()) throw ConfigError("validation prompt needs statements");
  std::string text = fill(std::string(embedded::kValidationUser), "problem",
                          problem.statement);
  text = fill(std::move(text), "statement_type",
              kind == core::ExperienceKind::positive ? "Verified Propositions"
                                                     : "Critical Pitfalls");
  text = fill(std::move(text), "count", std::to_string(statements.size()));
  return fill(std::move(text), "statements_list", numbered_list(statements));
}

std::vector<bool> parse_validation(std::string_view text, int expected) {
  std::size_t open = text.rfind("<decision>");
  if (open == std::string_view::npos) throw ParseError("no <decision> tag in judge reply");
  std::size_t close = text.find("</decision>", open);
  if (close == std::string_view::npos) throw ParseError("unterminated <decision> tag");
  std::string_view inner = trim(text.substr(open + 10, close - open - 10));
  if (inner.size() < 2 || inner.front() != '[' || inner.back() != ']') {
    throw ParseError("decision payload is not a bracketed list");
  }
  inner = inner.substr(1, inner.size() - 2);

  std::vector<bool> verdicts;
  std::size_t start = 0;
  while (start <= inner.size()) {
    std::size_t comma = inner.find(',', start);
    std::string_view entry =
        trim(inner.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                 : comma - start));
    if (!entry.empty()) {
      if (entry == "True" || entry == "true") {
        verdicts.push_back(true);
      } else if (entry == "False" || entry == "false") {
        verdicts.push_back(false);
      } else {
        throw ParseError("unrecognized verdict '" + std::string(entry) + "'");
      }
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (static_cast<int>(verdicts.size()) != expected) {
    std::ostringstream msg;
    msg << "judge returned " << verdicts.size() << " verdicts, expected " << expected;
    throw ParseError(msg.str());
  }
  return verdicts;
}

}  // namespace rse::prompts
