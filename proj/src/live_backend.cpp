#include "mograd/live_backend.hpp"

#include <cstdlib>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "httplib.h"

namespace mograd {

namespace {

struct RetriableStatus : TransportError {
  using TransportError::TransportError;
};

}  // namespace

const std::string& LiveBackendOptions::model_for(Stage stage) const {
  auto it = stage_models.find(stage);
  return it != stage_models.end() && !it->second.empty() ? it->second : default_model;
}

LiveBackend::LiveBackend(LiveBackendOptions options)
    : options_(std::move(options)), in_flight_(std::max(1, std::min(options_.max_in_flight, 1024))) {
  const auto scheme_end = options_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError(fmt::format("endpoint '{}' is not an absolute URL", options_.endpoint));
  }
  const auto path_start = options_.endpoint.find('/', scheme_end + 3);
  origin_ = options_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : options_.endpoint.substr(path_start);
  if (options_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str())) api_key_ = key;
  }
}

std::string LiveBackend::id() const { return "live:" + origin_; }

std::string LiveBackend::request_body(const ChatRequest& request) const {
  nlohmann::json body;
  body["model"] = options_.model_for(request.stage);
  auto& msgs = body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  body["temperature"] = request.temperature;
  if (request.seed) body["seed"] = *request.seed;
  return body.dump();
}

ChatResponse parse_completion_body(const std::string& body, const std::string& backend_id) {
  const auto json = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (json.is_discarded()) throw ProtocolError("completion body is not valid JSON");
  try {
    const auto& content = json.at("choices").at(0).at("message").at("content");
    if (!content.is_string() || content.get_ref<const std::string&>().empty()) {
      throw ProtocolError("completion content is empty or not a string");
    }
    ChatResponse resp;
    resp.text = content.get<std::string>();
    resp.backend_id = backend_id;
    if (auto usage = json.find("usage"); usage != json.end() && usage->is_object()) {
      resp.usage.prompt_units = usage->value("prompt_tokens", 0);
      resp.usage.completion_units = usage->value("completion_tokens", 0);
    }
    return resp;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(fmt::format("malformed completion payload: {}", e.what()));
  }
}

ChatResponse LiveBackend::attempt(const std::string& body) {
  httplib::Client client(origin_);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(options_.timeout));
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) {
    throw TransportError(fmt::format("request to {} failed: {}", origin_, httplib::to_string(res.error())));
  }
  const int status = res->status;
  if (status >= 200 && status < 300) return parse_completion_body(res->body, id());
  if (status == 408 || status == 429 || status >= 500) {
    throw RetriableStatus(fmt::format("upstream returned HTTP {}", status));
  }
  throw ProtocolError(fmt::format("upstream returned HTTP {}: {}", status, res->body.substr(0, 512)));
}

ChatResponse LiveBackend::chat(const ChatRequest& request) {
  request.validate();
  const std::string body = request_body(request);

  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& sem;
    ~Release() { sem.release(); }
  } release{in_flight_};

  auto backoff = options_.base_backoff;
  for (int attempt_no = 1;; ++attempt_no) {
    try {
      return attempt(body);
    } catch (const TransportError& e) {
      if (attempt_no >= options_.max_attempts) {
        throw TransportError(fmt::format("{} (gave up after {} attempts)", e.what(), attempt_no));
      }
      std::uniform_int_distribution<long long> jitter(0, std::max<long long>(backoff.count() / 2, 0));
      const auto wait = backoff + std::chrono::milliseconds(jitter(jitter_rng));
      spdlog::warn("{} stage call failed (attempt {}/{}): {}; retrying in {} ms",
                   to_string(request.stage), attempt_no, options_.max_attempts, e.what(), wait.count());
      std::this_thread::sleep_for(wait);
      backoff = std::min(backoff * 2, options_.max_backoff);
    }
  }
}

}  // namespace mograd
