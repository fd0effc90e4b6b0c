#pragma once

#include <stdexcept>
#include <string>

namespace rse {

// Invalid or inconsistent configuration (files, CLI flags, model inputs).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A completion or embedding service failed (transport, HTTP status, payload).
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The prompt cannot fit the model context window together with the
// generation budget. Callers may truncate references and retry.
struct OverBudgetError : BackendError {
  using BackendError::BackendError;
};

// Structured text (distiller JSON, validator verdicts, JSONL records) could
// not be parsed.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A metric is undefined for the given inputs (e.g. empty rollout set).
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Embedding or similarity inputs are unusable (dimension mismatch, zero
// vector, missing embedding).
struct DedupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rse
