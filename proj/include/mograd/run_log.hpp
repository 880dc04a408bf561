#pragma once
// Run logs: one JSONL file per (mode, validation, seed). Every record carries
// schema_version, a wall-clock "ts" and an "event" kind. Reports are rebuilt
// from these files alone.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mograd/pipeline.hpp"

namespace mograd {

inline constexpr int kRunLogSchemaVersion = 1;

std::string run_log_name(const DecompositionMode& mode, ValidationPolicy validation, std::uint64_t seed);

nlohmann::json to_json(const MetricVector& mv);
MetricVector metric_vector_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);
/// Keys absent from `j` keep the values of `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Writes run logs into a directory, opening a new file at every run start.
class RunLogWriter : public RunSink {
 public:
  explicit RunLogWriter(std::filesystem::path dir);

  void run_started(const SeedRun& run, const RunConfig& config,
                   const std::vector<JudgePrompt>& initial_prompts) override;
  void step_started(int step, const std::string& scope, const std::vector<std::string>& minibatch_ids) override;
  void llm_calls(int step, const std::vector<CallRecord>& calls) override;
  void candidate_evaluated(const CandidateRecord& candidate) override;
  void gate_decision(int step, const std::string& scope, const GateResult& gate) override;
  void step_completed(const StepTrace& trace) override;
  void run_error(int step, const std::string& scope, const std::string& message) override;
  void run_completed(const SeedRun& run) override;

  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  void write(const std::string& event, nlohmann::json payload);

  std::filesystem::path dir_;
  std::ofstream out_;
  std::vector<std::filesystem::path> files_;
};

struct LoggedCall {
  int step = 0;
  CallRecord call;
};

struct LoadedRun {
  std::filesystem::path path;
  RunConfig config;
  SeedRun run;  // trajectory rebuilt
  std::vector<LoggedCall> calls;
  bool completed = false;  // RunCompleted present
};

/// Parses and validates one run log. Throws DatasetError (with line number)
/// on malformed records or an invalid event sequence.
LoadedRun load_run_log(const std::filesystem::path& path);

/// Every run_*.jsonl in `dir`, sorted by file name. Throws PreconditionError
/// when there is none.
std::vector<LoadedRun> load_run_logs(const std::filesystem::path& dir);

}  // namespace mograd
