#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

namespace tmd::testing {

/// Local stand-in for the remote image and chat endpoints.
///   POST /v1/images            {"prompt","width","height","seed","image_b64"?,"mask_b64"?}
///   POST /v1/chat/completions  {"messages":[...]}
class StubModelServer {
 public:
  enum class Mode { ok, error500, error400, empty_content, malformed, delay };

  StubModelServer();
  ~StubModelServer();
  StubModelServer(const StubModelServer&) = delete;
  StubModelServer& operator=(const StubModelServer&) = delete;

  std::string base_url() const;

  void set_image_mode(Mode m) { image_mode_ = m; }
  void set_chat_mode(Mode m) { chat_mode_ = m; }
  /// Fail the next `n` calls with 500, then behave normally.
  void fail_next_chat_calls(int n) { chat_failures_left_ = n; }
  void fail_next_image_calls(int n) { image_failures_left_ = n; }
  void set_delay_ms(int ms) { delay_ms_ = ms; }

  /// Content returned for a chat request. Default: echo of the last user message.
  void set_chat_reply(std::function<std::string(const nlohmann::json&)> fn);
  void set_usage(std::int64_t prompt_tokens, std::int64_t completion_tokens);

  int image_calls() const { return image_calls_; }
  int chat_calls() const { return chat_calls_; }
  nlohmann::json last_image_request() const;
  nlohmann::json last_chat_request() const;
  std::string last_authorization() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;

  std::atomic<Mode> image_mode_{Mode::ok};
  std::atomic<Mode> chat_mode_{Mode::ok};
  std::atomic<int> image_failures_left_{0};
  std::atomic<int> chat_failures_left_{0};
  std::atomic<int> delay_ms_{0};
  std::atomic<int> image_calls_{0};
  std::atomic<int> chat_calls_{0};
  std::atomic<std::int64_t> usage_prompt_{-1};
  std::atomic<std::int64_t> usage_completion_{-1};

  mutable std::mutex mu_;
  std::function<std::string(const nlohmann::json&)> chat_reply_;
  nlohmann::json last_image_;
  nlohmann::json last_chat_;
  std::string last_auth_;
};

}  // namespace tmd::testing
