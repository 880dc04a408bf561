#pragma once
// Record/replay fixture store: one file per request fingerprint plus an
// append-only index.jsonl mapping fingerprint -> file name.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "mograd/backend.hpp"

namespace mograd {

class FixtureStore {
 public:
  /// Opens (creating if needed) a fixture directory and loads its index.
  explicit FixtureStore(std::filesystem::path dir);

  /// Stores the response text and appends an index entry. The first
  /// recording of a fingerprint wins.
  void put(const std::string& fingerprint, const std::string& text);
  std::optional<std::string> get(const std::string& fingerprint) const;
  bool contains(const std::string& fingerprint) const;
  std::size_t size() const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> index_;  // fingerprint -> file name
};

/// Serves recorded responses; immutable after construction.
class ReplayBackend : public ChatBackend {
 public:
  /// Loads every fixture listed in the index. Throws DatasetError when the
  /// directory or a listed file is missing.
  explicit ReplayBackend(const std::filesystem::path& dir);

  ChatResponse chat(const ChatRequest& request) override;  // ReplayMissError on absence
  std::string id() const override { return "replay"; }

  std::size_t size() const { return responses_.size(); }

 private:
  std::map<std::string, std::string> responses_;
};

/// Forwards to another backend and records every response by fingerprint.
class RecordingBackend : public ChatBackend {
 public:
  RecordingBackend(ChatBackend& inner, std::shared_ptr<FixtureStore> store);

  ChatResponse chat(const ChatRequest& request) override;
  std::string id() const override { return inner_.id(); }

 private:
  ChatBackend& inner_;
  std::shared_ptr<FixtureStore> store_;
};

}  // namespace mograd
