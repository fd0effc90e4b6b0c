#include "rse/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "rse/mock_world.hpp"
#include "rse/tokens.hpp"

namespace rse::backend {

namespace {

using nlohmann::json;

core::Finish finish_from_reason(const std::string& reason) {
  if (reason == "stop") return core::Finish::stop;
  if (reason == "length") return core::Finish::length;
  return core::Finish::error;
}

}  // namespace

BackendProfile validate_profile(BackendProfile profile) {
  if (profile.name.empty()) throw ConfigError("backend profile needs a name");
  if (profile.max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (profile.context_window < 1) throw ConfigError("context_window must be >= 1");
  if (profile.max_tokens > profile.context_window) {
    std::ostringstream msg;
    msg << "max_tokens (" << profile.max_tokens << ") exceeds context_window ("
        << profile.context_window << ")";
    throw ConfigError(msg.str());
  }
  if (profile.kind == Kind::http && profile.endpoint.empty()) {
    throw ConfigError("http backend profile needs an endpoint");
  }
  if (profile.retry_limit < 1) throw ConfigError("retry_limit must be >= 1");
  if (!profile.reasoning_split.empty()) {
    try {
      std::regex probe(profile.reasoning_split);
    } catch (const std::regex_error& e) {
      throw ConfigError(std::string("reasoning_split is not a valid regex: ") + e.what());
    }
  }
  if (profile.model.empty()) profile.model = profile.name;
  return profile;
}

Backend::Backend(BackendProfile profile) : profile_(validate_profile(std::move(profile))) {}

Completion Backend::chat_complete(const std::string& system, const std::string& user,
                                  std::uint64_t seed) {
  int prompt_tokens = tokens::count(system) + tokens::count(user);
  int window = profile_.context_window - profile_.max_tokens;
  if (prompt_tokens > window) {
    std::ostringstream msg;
    msg << "prompt of ~" << prompt_tokens << " tokens exceeds the " << window
        << "-token window left by max_tokens " << profile_.max_tokens
        << " in context_window " << profile_.context_window;
    throw OverBudgetError(msg.str());
  }
  Completion completion = complete(system, user, seed, prompt_tokens);
  if (completion.tokens_in == 0) completion.tokens_in = prompt_tokens;
  if (completion.tokens_out == 0) {
    completion.tokens_out =
        tokens::count(completion.reasoning) + tokens::count(completion.final_text);
  }
  return completion;
}

HttpBackend::HttpBackend(BackendProfile profile) : Backend(std::move(profile)) {
  if (profile_.kind != Kind::http) {
    throw ConfigError("HttpBackend requires an http profile");
  }
}

Completion HttpBackend::complete(const std::string& system, const std::string& user,
                                 std::uint64_t seed, int /*prompt_tokens*/) {
  json body = {
      {"model", profile_.model},
      {"messages",
       json::array({{{"role", "system"}, {"content", system}},
                    {{"role", "user"}, {"content", user}}})},
      {"temperature", profile_.temperature},
      {"top_p", profile_.top_p},
      {"top_k", profile_.top_k},
      {"max_tokens", profile_.max_tokens},
      {"seed", seed},
  };
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!profile_.api_key_env.empty()) {
    if (const char* key = std::getenv(profile_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  detail::EndpointParts parts = detail::split_endpoint(profile_.endpoint);
  const std::string path = parts.prefix + "/v1/chat/completions";

  httplib::Result res;
  std::string transport_error;
  for (int attempt = 1; attempt <= profile_.retry_limit; ++attempt) {
    httplib::Client client(parts.base);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(600, 0);
    res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      transport_error = httplib::to_string(res.error());
      std::this_thread::sleep_for(
          std::chrono::milliseconds(profile_.retry_backoff_ms * attempt));
      continue;
    }
    if (detail::transient_status(res->status) && attempt < profile_.retry_limit) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(profile_.retry_backoff_ms * attempt));
      continue;
    }
    break;
  }
  if (!res) {
    throw BackendError("completion request failed after " +
                       std::to_string(profile_.retry_limit) +
                       " attempts: " + transport_error);
  }
  if (res->status != 200) {
    std::ostringstream msg;
    msg << "completion request returned HTTP " << res->status << ": "
        << res->body.substr(0, 300);
    throw BackendError(msg.str());
  }

  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw BackendError(std::string("completion payload is not JSON: ") + e.what());
  }
  if (!reply.contains("choices") || !reply["choices"].is_array() ||
      reply["choices"].empty()) {
    throw BackendError("completion payload has no choices");
  }
  const json& choice = reply["choices"][0];
  const json message = choice.value("message", json::object());

  Completion out;
  if (message.contains("reasoning_content") && message["reasoning_content"].is_string()) {
    out.reasoning = message["reasoning_content"].get<std::string>();
  }
  if (message.contains("content") && message["content"].is_string()) {
    out.final_text = message["content"].get<std::string>();
  }
  if (out.reasoning.empty() && !profile_.reasoning_split.empty()) {
    std::regex splitter(profile_.reasoning_split);
    std::smatch match;
    if (std::regex_search(out.final_text, match, splitter)) {
      out.reasoning = out.final_text.substr(0, match.position(0));
      out.final_text = out.final_text.substr(match.position(0) + match.length(0));
    }
  }
  out.finish = finish_from_reason(choice.value("finish_reason", "stop"));
  if (reply.contains("usage") && reply["usage"].is_object()) {
    const json& usage = reply["usage"];
    out.tokens_in = usage.value("prompt_tokens", 0);
    out.tokens_out = usage.value("completion_tokens", 0);
  }
  return out;
}

std::unique_ptr<Backend> make_backend(BackendProfile profile,
                                      std::shared_ptr<const MockWorld> world) {
  profile = validate_profile(std::move(profile));
  if (profile.kind == Kind::mock) {
    if (!world) throw ConfigError("mock backend profile needs a mock world");
    return std::make_unique<MockBackend>(std::move(profile), std::move(world));
  }
  return std::make_unique<HttpBackend>(std::move(profile));
}

}  // namespace rse::backend
