#include "tmd/chat_client.hpp"

#include "tmd/error.hpp"
#include "tmd/metering.hpp"

namespace tmd {

Completion chat_complete(const ChatEndpoint& endpoint, std::string_view system_prompt,
                         const nlohmann::json& user_content) {
  nlohmann::json body{{"messages", nlohmann::json::array({
                                        {{"role", "system"}, {"content", system_prompt}},
                                        {{"role", "user"}, {"content", user_content}},
                                    })}};
  if (!endpoint.model.empty()) body["model"] = endpoint.model;

  const auto reply = post_json(endpoint.http, endpoint.path, body);
  Completion out;
  try {
    out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.contains("usage")) {
      out.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
      out.completion_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
    } else {
      const std::string user_text = user_content.is_string() ? user_content.get<std::string>() : "";
      out.prompt_tokens = count_tokens(system_prompt) + count_tokens(user_text);
      out.completion_tokens = count_tokens(out.text);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("malformed chat completion: ") + e.what());
  }
  return out;
}

}  // namespace tmd
