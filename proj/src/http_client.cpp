#include "tmd/http_client.hpp"

#include <httplib.h>

#include <cstdlib>

#include "tmd/error.hpp"

namespace tmd {

namespace {

struct SplitUrl {
  std::string origin;
  std::string prefix;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

std::string token_from_env(const std::string& env_var) {
  if (env_var.empty()) return {};
  const char* v = std::getenv(env_var.c_str());
  return v ? std::string(v) : std::string{};
}

nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path,
                         const nlohmann::json& body) {
  const auto url = split_url(endpoint.base_url);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!endpoint.bearer_token.empty()) {
    headers.emplace("Authorization", "Bearer " + endpoint.bearer_token);
  }
  const std::string payload = body.dump();
  const std::string target = url.prefix + path;

  std::string last_error;
  bool last_was_timeout = false;
  for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(target, headers, payload, "application/json");
    if (!res) {
      const auto elapsed = std::chrono::steady_clock::now() - started;
      const auto err = res.error();
      last_was_timeout = err == httplib::Error::ConnectionTimeout ||
                         (err == httplib::Error::Read && elapsed >= endpoint.timeout);
      last_error = "transport error: " + httplib::to_string(err);
      continue;
    }
    if (res->status >= 400 && res->status < 500) {
      throw Error(ErrorCode::BackendUnavailable,
                  "backend rejected request with HTTP " + std::to_string(res->status));
    }
    if (res->status >= 500) {
      last_was_timeout = res->status == 504;
      last_error = "backend returned HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::BackendUnavailable, std::string("backend reply is not JSON: ") + e.what());
    }
  }
  throw Error(last_was_timeout ? ErrorCode::Timeout : ErrorCode::BackendUnavailable,
              last_error + " after " + std::to_string(endpoint.retries + 1) + " attempt(s)");
}

}  // namespace tmd
