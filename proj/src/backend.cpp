#include "mograd/backend.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mograd/digest.hpp"

namespace mograd {

void ChatRequest::validate() const {
  if (messages.empty()) throw PreconditionError("chat request has no messages");
  for (const auto& m : messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant") {
      throw PreconditionError(fmt::format("invalid message role '{}'", m.role));
    }
  }
  if (!(temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");
}

std::string fingerprint(const ChatRequest& request) {
  nlohmann::json canonical;
  auto& msgs = canonical["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) msgs.push_back({m.role, m.content});
  // Shortest round-trip text keeps 0.3 and 0.30000000000000004 apart.
  canonical["temperature"] = fmt::format("{}", request.temperature);
  canonical["stage"] = to_string(request.stage);
  canonical["scope"] = request.scope;
  canonical["seed"] = request.seed ? nlohmann::json(*request.seed) : nlohmann::json(nullptr);
  return sha256_hex(canonical.dump());
}

ChatRequest make_request(std::string content, Stage stage, std::string scope, double temperature,
                         std::optional<std::uint64_t> seed) {
  ChatRequest req;
  req.messages.push_back({"user", std::move(content)});
  req.stage = stage;
  req.scope = std::move(scope);
  req.temperature = temperature;
  req.seed = seed;
  return req;
}

}  // namespace mograd
