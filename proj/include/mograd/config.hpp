#pragma once
// Flat JSON configuration file shared by the CLI commands. Every key is
// optional; command-line flags override file values.
//
//   {"mode": "ssc", "validation": "mae", "steps": 12, "seeds": 3,
//    "backend": "live", "endpoint": "https://host/v1/chat/completions",
//    "model": "...", "model_optimizer": "...", "temperature_task": 1.0, ...}

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mograd/dataset.hpp"
#include "mograd/fixtures.hpp"
#include "mograd/live_backend.hpp"
#include "mograd/synthetic.hpp"

namespace mograd {

struct AppConfig {
  RunConfig run;
  std::string backend = "synthetic";  // live, replay or synthetic
  LiveBackendOptions live;
  std::optional<std::filesystem::path> fixtures;  // replay source
  std::optional<std::filesystem::path> record;    // record responses here
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> world;     // synthetic world file
  std::optional<std::filesystem::path> prompts_dir;
  std::uint64_t world_seed = 7;
  std::size_t world_size = 640;
  std::uint64_t split_seed = 0;
  std::size_t train_n = 160;
  std::size_t test_n = 480;
  double val_fraction = 0.25;
};

/// Applies the keys of a flat JSON object on top of `base`. Throws
/// ConfigError on unknown keys or values of the wrong type.
AppConfig app_config_from_json(const nlohmann::json& j, AppConfig base = {});
AppConfig load_app_config(const std::filesystem::path& path, AppConfig base = {});
/// Flat JSON of everything except credentials (the key's env-var name is kept).
nlohmann::json to_json(const AppConfig& config);

struct LoadedData {
  DatasetSplit split;
  std::optional<SyntheticWorld> world;  // for the synthetic backend
};

/// Dataset file if configured, otherwise the synthetic world (file or generated).
LoadedData load_data(const AppConfig& config);

/// Backend chain for a config: live, replay or synthetic, optionally wrapped in
/// a recorder.
class BackendStack {
 public:
  BackendStack(const AppConfig& config, const std::optional<SyntheticWorld>& world);
  ChatBackend& get() { return recorder_ ? *recorder_ : *base_; }

 private:
  std::unique_ptr<ChatBackend> base_;
  std::shared_ptr<FixtureStore> store_;
  std::unique_ptr<RecordingBackend> recorder_;
};

}  // namespace mograd
