#include "mograd/fixtures.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace mograd {

namespace fs = std::filesystem;

namespace {

constexpr int kFixtureSchemaVersion = 1;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> read_index(const fs::path& dir) {
  std::map<std::string, std::string> index;
  const fs::path path = dir / "index.jsonl";
  if (!fs::exists(path)) return index;
  std::ifstream in(path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto json = nlohmann::json::parse(line, nullptr, false);
    if (json.is_discarded() || !json.contains("fingerprint") || !json.contains("file")) {
      throw DatasetError(fmt::format("malformed fixture index entry in {}", path.string()), line_no);
    }
    index[json["fingerprint"].get<std::string>()] = json["file"].get<std::string>();
  }
  return index;
}

}  // namespace

FixtureStore::FixtureStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  index_ = read_index(dir_);
}

void FixtureStore::put(const std::string& fingerprint, const std::string& text) {
  std::lock_guard lock(mu_);
  if (index_.contains(fingerprint)) return;
  const std::string file = fingerprint + ".txt";
  {
    std::ofstream out(dir_ / file, std::ios::binary | std::ios::trunc);
    out << text;
  }
  index_[fingerprint] = file;
  std::ofstream idx(dir_ / "index.jsonl", std::ios::app);
  idx << nlohmann::json{{"schema_version", kFixtureSchemaVersion},
                        {"fingerprint", fingerprint},
                        {"file", file}}.dump()
      << '\n';
}

std::optional<std::string> FixtureStore::get(const std::string& fingerprint) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(fingerprint);
  if (it == index_.end()) return std::nullopt;
  return read_file(dir_ / it->second);
}

bool FixtureStore::contains(const std::string& fingerprint) const {
  std::lock_guard lock(mu_);
  return index_.contains(fingerprint);
}

std::size_t FixtureStore::size() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

ReplayBackend::ReplayBackend(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw DatasetError(fmt::format("fixture directory {} does not exist", dir.string()));
  }
  for (const auto& [fp, file] : read_index(dir)) responses_[fp] = read_file(dir / file);
}

ChatResponse ReplayBackend::chat(const ChatRequest& request) {
  request.validate();
  const std::string fp = fingerprint(request);
  auto it = responses_.find(fp);
  if (it == responses_.end()) throw ReplayMissError(fp);
  return {it->second, {}, id()};
}

RecordingBackend::RecordingBackend(ChatBackend& inner, std::shared_ptr<FixtureStore> store)
    : inner_(inner), store_(std::move(store)) {}

ChatResponse RecordingBackend::chat(const ChatRequest& request) {
  auto response = inner_.chat(request);
  store_->put(fingerprint(request), response.text);
  return response;
}

}  // namespace mograd
