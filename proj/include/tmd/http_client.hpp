#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

namespace tmd {

struct HttpEndpoint {
  std::string base_url;  // "http://host:port[/prefix]"
  std::string bearer_token;
  std::chrono::milliseconds timeout{120'000};
  int retries = 1;
};

/// POSTs a JSON body and parses a JSON reply.
/// Transport errors and 5xx replies are retried `retries` times; 4xx is not.
/// Throws Error(Timeout) when the final failure is a timeout, otherwise
/// Error(BackendUnavailable).
nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path,
                         const nlohmann::json& body);

/// Reads the variable named `env_var`; empty name or unset variable yields "".
std::string token_from_env(const std::string& env_var);

}  // namespace tmd
