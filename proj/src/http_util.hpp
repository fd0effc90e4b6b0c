#pragma once

#include <string>
#include <string_view>

#include "rse/errors.hpp"

namespace rse::detail {

// Splits "scheme://host[:port][/prefix]" into the client base URL and the
// path prefix. httplib takes the base; request paths get the prefix.
struct EndpointParts {
  std::string base;
  std::string prefix;
};

inline EndpointParts split_endpoint(std::string_view endpoint) {
  std::size_t scheme = endpoint.find("://");
  if (scheme == std::string_view::npos) {
    throw ConfigError("endpoint must start with http:// or https://: '" +
                      std::string(endpoint) + "'");
  }
  std::size_t slash = endpoint.find('/', scheme + 3);
  if (slash == std::string_view::npos) {
    return {std::string(endpoint), ""};
  }
  std::string prefix(endpoint.substr(slash));
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {std::string(endpoint.substr(0, slash)), prefix};
}

// Retry policy for HTTP services: server-side and throttling failures are
// transient, client-side errors are not.
inline bool transient_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

}  // namespace rse::detail
