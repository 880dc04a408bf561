#pragma once
// Uniform chat-completion contract shared by the live, replay and synthetic backends.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mograd/core.hpp"

namespace mograd {

struct ChatMessage {
  std::string role;  // system, user or assistant
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  Stage stage = Stage::Task;
  std::string scope{kAllScope};  // criterion id or "all"

  /// Throws PreconditionError for an empty message list, a bad role or a
  /// negative temperature.
  void validate() const;
};

struct Usage {
  int prompt_units = 0;
  int completion_units = 0;
};

struct ChatResponse {
  std::string text;
  Usage usage;
  std::string backend_id;
};

/// Stable digest over messages, temperature, stage, scope and seed.
std::string fingerprint(const ChatRequest& request);

/// Implementations must be safe to call concurrently.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  virtual ChatResponse chat(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// Convenience for the common single-user-message request.
ChatRequest make_request(std::string content, Stage stage, std::string scope, double temperature,
                         std::optional<std::uint64_t> seed);

}  // namespace mograd
