#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "tmd/http_client.hpp"

namespace tmd {

struct Completion {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatEndpoint {
  HttpEndpoint http;
  std::string path = "/v1/chat/completions";
  std::string model;
};

/// One chat-completion round trip. `user_content` is a string or a content-part array.
/// Usage falls back to the offline token splitter when the reply has none.
Completion chat_complete(const ChatEndpoint& endpoint, std::string_view system_prompt,
                         const nlohmann::json& user_content);

}  // namespace tmd
