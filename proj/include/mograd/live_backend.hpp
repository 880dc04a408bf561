#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <semaphore>
#include <string>

#include "mograd/backend.hpp"

namespace mograd {

struct LiveBackendOptions {
  /// Full URL of the chat-completions endpoint, e.g.
  /// https://api.example.com/v1/chat/completions
  std::string endpoint;
  std::string default_model;
  std::map<Stage, std::string> stage_models;  // overrides default_model per stage
  /// Name of the environment variable holding the bearer token; empty = no auth.
  std::string api_key_env = "MOGRAD_API_KEY";
  int max_attempts = 5;
  std::chrono::milliseconds base_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
  std::chrono::seconds timeout{180};
  int max_in_flight = 4;

  const std::string& model_for(Stage stage) const;
};

/// OpenAI-compatible chat-completions client. Transport failures, 408, 429 and
/// 5xx are retried with exponential backoff and jitter; other non-2xx statuses
/// and unusable payloads raise ProtocolError immediately.
class LiveBackend : public ChatBackend {
 public:
  explicit LiveBackend(LiveBackendOptions options);

  ChatResponse chat(const ChatRequest& request) override;
  std::string id() const override;

  /// Request body sent for `request`; exposed for wire-format tests.
  std::string request_body(const ChatRequest& request) const;

 private:
  ChatResponse attempt(const std::string& body);

  LiveBackendOptions options_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
  std::string api_key_;
  std::counting_semaphore<1024> in_flight_;
};

/// Parses a chat-completions response body. Throws ProtocolError when
/// choices[0].message.content is missing or empty.
ChatResponse parse_completion_body(const std::string& body, const std::string& backend_id);

}  // namespace mograd
