#include "mograd/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include <fmt/format.h>

namespace mograd {

using nlohmann::json;

namespace {

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config key '{}' has the wrong type", key));
  }
}

}  // namespace

AppConfig app_config_from_json(const json& j, AppConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  using Setter = std::function<void(const json&, const std::string&)>;
  auto path_setter = [](std::optional<std::filesystem::path>& slot) {
    return [&slot](const json& v, const std::string& k) { slot = as<std::string>(v, k); };
  };
  auto model_setter = [&c](Stage stage) {
    return [&c, stage](const json& v, const std::string& k) { c.live.stage_models[stage] = as<std::string>(v, k); };
  };
  const std::map<std::string, Setter> setters = {
      {"mode", [&](const json& v, const std::string& k) { c.run.mode = parse_mode(as<std::string>(v, k)); }},
      {"validation",
       [&](const json& v, const std::string& k) { c.run.validation = parse_validation(as<std::string>(v, k)); }},
      {"steps", [&](const json& v, const std::string& k) { c.run.steps = as<int>(v, k); }},
      {"seeds",
       [&](const json& v, const std::string& k) {
         if (v.is_array()) {
           c.run.seeds = as<std::vector<std::uint64_t>>(v, k);
         } else {
           const int n = as<int>(v, k);
           if (n < 1) throw ConfigError("seeds must be >= 1");
           c.run.seeds.clear();
           for (int i = 0; i < n; ++i) c.run.seeds.push_back(static_cast<std::uint64_t>(i));
         }
       }},
      {"minibatch_size", [&](const json& v, const std::string& k) { c.run.minibatch_size = as<int>(v, k); }},
      {"max_parse_retries", [&](const json& v, const std::string& k) { c.run.max_parse_retries = as<int>(v, k); }},
      {"gradient_paragraph_limit",
       [&](const json& v, const std::string& k) { c.run.gradient_paragraph_limit = as<int>(v, k); }},
      {"parallelism",
       [&](const json& v, const std::string& k) {
         c.run.parallelism = as<int>(v, k);
         c.live.max_in_flight = c.run.parallelism;
       }},
      {"cherry_pick_include_rejected",
       [&](const json& v, const std::string& k) { c.run.cherry_pick_include_rejected = as<bool>(v, k); }},
      {"temperature_task", [&](const json& v, const std::string& k) { c.run.temperatures.task = as<double>(v, k); }},
      {"temperature_loss", [&](const json& v, const std::string& k) { c.run.temperatures.loss = as<double>(v, k); }},
      {"temperature_gradient",
       [&](const json& v, const std::string& k) { c.run.temperatures.gradient = as<double>(v, k); }},
      {"temperature_optimizer",
       [&](const json& v, const std::string& k) { c.run.temperatures.optimizer = as<double>(v, k); }},
      {"temperature_diagnostic",
       [&](const json& v, const std::string& k) { c.run.temperatures.diagnostic = as<double>(v, k); }},
      {"backend",
       [&](const json& v, const std::string& k) {
         c.backend = as<std::string>(v, k);
         if (c.backend != "live" && c.backend != "replay" && c.backend != "synthetic") {
           throw ConfigError(fmt::format("unknown backend '{}'", c.backend));
         }
       }},
      {"endpoint", [&](const json& v, const std::string& k) { c.live.endpoint = as<std::string>(v, k); }},
      {"model", [&](const json& v, const std::string& k) { c.live.default_model = as<std::string>(v, k); }},
      {"model_task", model_setter(Stage::Task)},
      {"model_loss", model_setter(Stage::Loss)},
      {"model_gradient", model_setter(Stage::Gradient)},
      {"model_optimizer", model_setter(Stage::Optimizer)},
      {"model_diagnostic", model_setter(Stage::Diagnostic)},
      {"api_key_env", [&](const json& v, const std::string& k) { c.live.api_key_env = as<std::string>(v, k); }},
      {"max_attempts", [&](const json& v, const std::string& k) { c.live.max_attempts = as<int>(v, k); }},
      {"timeout_seconds",
       [&](const json& v, const std::string& k) { c.live.timeout = std::chrono::seconds(as<int>(v, k)); }},
      {"base_backoff_ms",
       [&](const json& v, const std::string& k) { c.live.base_backoff = std::chrono::milliseconds(as<int>(v, k)); }},
      {"max_backoff_ms",
       [&](const json& v, const std::string& k) { c.live.max_backoff = std::chrono::milliseconds(as<int>(v, k)); }},
      {"fixtures", path_setter(c.fixtures)},
      {"record", path_setter(c.record)},
      {"dataset", path_setter(c.dataset)},
      {"world", path_setter(c.world)},
      {"prompts_dir", path_setter(c.prompts_dir)},
      {"world_seed", [&](const json& v, const std::string& k) { c.world_seed = as<std::uint64_t>(v, k); }},
      {"world_size", [&](const json& v, const std::string& k) { c.world_size = as<std::size_t>(v, k); }},
      {"split_seed", [&](const json& v, const std::string& k) { c.split_seed = as<std::uint64_t>(v, k); }},
      {"train_n", [&](const json& v, const std::string& k) { c.train_n = as<std::size_t>(v, k); }},
      {"test_n", [&](const json& v, const std::string& k) { c.test_n = as<std::size_t>(v, k); }},
      {"val_fraction", [&](const json& v, const std::string& k) { c.val_fraction = as<double>(v, k); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
    if (value.is_null()) continue;
    it->second(value, key);
  }
  return c;
}

AppConfig load_app_config(const std::filesystem::path& path, AppConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(fmt::format("config file {} is not valid JSON", path.string()));
  return app_config_from_json(j, std::move(base));
}

json to_json(const AppConfig& c) {
  auto opt_path = [](const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); };
  json j = {{"mode", c.run.mode.code()},
            {"validation", to_string(c.run.validation)},
            {"steps", c.run.steps},
            {"seeds", c.run.seeds},
            {"minibatch_size", c.run.minibatch_size},
            {"max_parse_retries", c.run.max_parse_retries},
            {"gradient_paragraph_limit", c.run.gradient_paragraph_limit},
            {"parallelism", c.run.parallelism},
            {"cherry_pick_include_rejected", c.run.cherry_pick_include_rejected},
            {"temperature_task", c.run.temperatures.task},
            {"temperature_loss", c.run.temperatures.loss},
            {"temperature_gradient", c.run.temperatures.gradient},
            {"temperature_optimizer", c.run.temperatures.optimizer},
            {"temperature_diagnostic", c.run.temperatures.diagnostic},
            {"backend", c.backend},
            {"endpoint", c.live.endpoint},
            {"model", c.live.default_model},
            {"api_key_env", c.live.api_key_env},
            {"max_attempts", c.live.max_attempts},
            {"timeout_seconds", c.live.timeout.count()},
            {"base_backoff_ms", c.live.base_backoff.count()},
            {"max_backoff_ms", c.live.max_backoff.count()},
            {"fixtures", opt_path(c.fixtures)},
            {"record", opt_path(c.record)},
            {"dataset", opt_path(c.dataset)},
            {"world", opt_path(c.world)},
            {"prompts_dir", opt_path(c.prompts_dir)},
            {"world_seed", c.world_seed},
            {"world_size", c.world_size},
            {"split_seed", c.split_seed},
            {"train_n", c.train_n},
            {"test_n", c.test_n},
            {"val_fraction", c.val_fraction}};
  for (const auto& [stage, model] : c.live.stage_models) j["model_" + to_string(stage)] = model;
  return j;
}

LoadedData load_data(const AppConfig& c) {
  LoadedData out;
  std::vector<Sample> samples;
  std::vector<Criterion> criteria;
  if (c.dataset) {
    auto loaded = load_dataset(*c.dataset);
    samples = loaded.samples;
    criteria = loaded.criteria;
    out.world = SyntheticWorld::from_samples(std::move(loaded.samples), loaded.criteria);
  } else {
    out.world = c.world ? SyntheticWorld::load(*c.world) : SyntheticWorld::generate(c.world_size, c.world_seed);
    samples = out.world->samples;
    criteria = out.world->criteria;
  }
  out.split = split_dataset(std::move(samples), std::move(criteria), c.split_seed, c.train_n, c.test_n, c.val_fraction);
  return out;
}

BackendStack::BackendStack(const AppConfig& c, const std::optional<SyntheticWorld>& world) {
  if (c.backend == "live") {
    if (c.live.endpoint.empty()) throw ConfigError("the live backend needs an endpoint");
    if (c.live.default_model.empty()) throw ConfigError("the live backend needs a model");
    base_ = std::make_unique<LiveBackend>(c.live);
  } else if (c.backend == "replay") {
    if (!c.fixtures) throw ConfigError("the replay backend needs --fixtures DIR");
    base_ = std::make_unique<ReplayBackend>(*c.fixtures);
  } else if (c.backend == "synthetic") {
    if (!world) throw ConfigError("the synthetic backend needs a world");
    base_ = std::make_unique<SyntheticBackend>(*world);
  } else {
    throw ConfigError(fmt::format("unknown backend '{}'", c.backend));
  }
  if (c.record) {
    store_ = std::make_shared<FixtureStore>(*c.record);
    recorder_ = std::make_unique<RecordingBackend>(*base_, store_);
  }
}

}  // namespace mograd
