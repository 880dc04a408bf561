#pragma once
// Test double: answers every request through a handler and remembers what it saw.

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <regex>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mograd/backend.hpp"
#include "mograd/dataset.hpp"
#include "mograd/digest.hpp"
#include "mograd/prompt.hpp"
#include "mograd/synthetic.hpp"

namespace mograd::testing {

class ScriptedBackend : public ChatBackend {
 public:
  using Handler = std::function<std::string(const ChatRequest&)>;

  explicit ScriptedBackend(Handler handler) : handler_(std::move(handler)) {}

  ChatResponse chat(const ChatRequest& request) override {
    request.validate();
    {
      std::lock_guard lock(mu_);
      requests_.push_back(request);
    }
    ChatResponse resp;
    resp.text = handler_(request);
    resp.backend_id = "scripted";
    resp.usage = {1, 1};
    return resp;
  }

  std::string id() const override { return "scripted"; }

  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

  int count(Stage stage) const {
    std::lock_guard lock(mu_);
    int n = 0;
    for (const auto& r : requests_) n += r.stage == stage;
    return n;
  }

  void clear() {
    std::lock_guard lock(mu_);
    requests_.clear();
  }

 private:
  Handler handler_;
  mutable std::mutex mu_;
  std::vector<ChatRequest> requests_;
};

inline std::string text_of(const ChatRequest& r) { return r.messages.back().content; }

inline std::string between(const std::string& text, const std::string& open, const std::string& close) {
  const auto a = text.find(open);
  if (a == std::string::npos) return {};
  const auto start = a + open.size();
  const auto b = text.find(close, start);
  return b == std::string::npos ? std::string{} : text.substr(start, b - start);
}

/// Criterion keys listed in a rendered judge prompt's output format.
inline std::vector<std::string> output_keys(const std::string& text) {
  const std::string block = between(text, "## Output format (follow this EXACTLY):\n{\n", "\n}");
  static const std::regex key_re(R"re("([A-Za-z_]+)"\s*:)re");
  std::vector<std::string> keys;
  for (auto it = std::sregex_iterator(block.begin(), block.end(), key_re); it != std::sregex_iterator(); ++it) {
    keys.push_back((*it)[1]);
  }
  return keys;
}

/// Score in 1..5 that varies with the rendered text (and so with the sample).
inline int hashed_score(const std::string& text, const std::string& key) {
  const auto h = sha256_hex(text + "|" + key);
  return static_cast<int>(std::stoul(h.substr(0, 6), nullptr, 16) % 5) + 1;
}

inline std::string hashed_task_answer(const ChatRequest& r) {
  const std::string text = text_of(r);
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& k : output_keys(text)) j[k] = hashed_score(text, k);
  return j.dump();
}

/// Echoes the current instruction(s) back unchanged, optionally appending `suffix`.
inline std::string echo_optimizer_answer(const ChatRequest& r, const std::string& suffix = "") {
  const std::string text = text_of(r);
  if (r.scope != kAllScope) {
    return "<new_instruction>" + between(text, "## Current instruction\n", "\n\n## Feedback\n") + suffix +
           "</new_instruction>";
  }
  auto current = nlohmann::ordered_json::parse(between(text, "## Current instructions\n", "\n\n## Feedback\n"));
  for (auto& [k, v] : current.items()) v = v.get<std::string>() + suffix;
  return current.dump();
}

/// Every stage answers well-formed text. The optimizer appends " Be precise."
/// unless `no_op` is set.
inline ScriptedBackend::Handler well_formed_handler(bool no_op = false) {
  return [no_op](const ChatRequest& r) -> std::string {
    switch (r.stage) {
      case Stage::Task: return hashed_task_answer(r);
      case Stage::Loss: return fmt::format("The {} score misses the human score.", r.scope);
      case Stage::Gradient: return fmt::format("Tighten the {} instruction.", r.scope);
      case Stage::Optimizer: return echo_optimizer_answer(r, no_op ? "" : " Be precise.");
      case Stage::Diagnostic: return "5";
    }
    return "";
  };
}

/// A small split over a generated world: 24 train (18 + 6 val), 24 test.
inline DatasetSplit small_split(std::uint64_t seed = 3) {
  auto world = SyntheticWorld::generate(48, seed);
  return split_dataset(world.samples, world.criteria, 0, 24, 24, 0.25);
}

}  // namespace mograd::testing
