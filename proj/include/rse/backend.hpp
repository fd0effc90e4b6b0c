#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "rse/core.hpp"
#include "rse/errors.hpp"

namespace rse::backend {

enum class Kind { http, mock };

// Connection and sampling parameters for one model endpoint. `model` is the
// identifier sent to the service; `params` is the parameter count used for
// FLOPs estimates when known. When a service returns reasoning and answer in
// one content field, `reasoning_split` holds a regex whose first match
// separates them (text before the match is reasoning).
struct BackendProfile {
  std::string name;
  Kind kind = Kind::mock;
  std::string model;
  std::string endpoint;
  std::string api_key_env;
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 20;
  int max_tokens = 38912;
  int context_window = 131072;
  std::optional<double> params;
  std::string reasoning_split;
  int retry_limit = 3;
  int retry_backoff_ms = 250;
};

// Returns the profile when consistent; throws ConfigError otherwise
// (max_tokens must be positive and fit inside context_window, http profiles
// need an endpoint).
BackendProfile validate_profile(BackendProfile profile);

// One completion. tokens_in/tokens_out come from service usage when
// available, otherwise from the approximate tokenizer.
struct Completion {
  std::string reasoning;
  std::string final_text;
  core::Finish finish = core::Finish::stop;
  int tokens_in = 0;
  int tokens_out = 0;
};

// A chat-completion service. chat_complete is safe to call concurrently.
// The non-virtual entry point enforces the shared precondition: the prompt
// plus the generation budget must fit the context window, else
// OverBudgetError (and no request is made).
class Backend {
 public:
  virtual ~Backend() = default;

  const BackendProfile& profile() const { return profile_; }

  Completion chat_complete(const std::string& system, const std::string& user,
                           std::uint64_t seed);

 protected:
  explicit Backend(BackendProfile profile);

  virtual Completion complete(const std::string& system, const std::string& user,
                              std::uint64_t seed, int prompt_tokens) = 0;

  BackendProfile profile_;
};

// OpenAI-style chat backend over HTTP. Retries transient failures (transport
// errors, 429, 5xx) up to profile.retry_limit attempts with linear backoff;
// other failures throw BackendError immediately.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendProfile profile);

 protected:
  Completion complete(const std::string& system, const std::string& user,
                      std::uint64_t seed, int prompt_tokens) override;
};

class MockWorld;

// Builds a backend for the profile. Mock profiles require a world.
std::unique_ptr<Backend> make_backend(BackendProfile profile,
                                      std::shared_ptr<const MockWorld> world = nullptr);

}  // namespace rse::backend
