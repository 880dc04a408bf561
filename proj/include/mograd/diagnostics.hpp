#pragma once
// Post-hoc process diagnostics scored by an evaluator model: gradient
// specificity and feedback adherence, both as integers 1-10.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mograd/backend.hpp"
#include "mograd/pipeline.hpp"
#include "mograd/run_log.hpp"
#include "mograd/stage_prompts.hpp"

namespace mograd {

enum class DiagnosticKind { Specificity, Adherence };

std::string to_string(DiagnosticKind kind);
DiagnosticKind parse_diagnostic_kind(std::string_view text);

struct DiagnosticScore {
  DiagnosticKind kind = DiagnosticKind::Specificity;
  DecompositionMode mode = DecompositionMode::single_task();
  ValidationPolicy validation = ValidationPolicy::MaeGate;
  std::uint64_t seed = 0;
  int step = 0;
  std::string criterion;       // target
  std::string gradient_scope;  // scope of the scored gradient
  std::optional<int> score;    // missing when the evaluator never answered 1-10
  std::string raw_response;
  std::string error;           // set when the evaluator call failed
};

struct DiagnosticOptions {
  const PromptTemplates* templates = nullptr;  // built-in when null
  double temperature = 0.0;
  int parallelism = 4;
};

/// Strict: the trimmed response must be a bare integer in [1, 10].
std::optional<int> parse_diagnostic_score(std::string_view raw);

std::string render_specificity_prompt(const std::string& tmpl, std::string_view target,
                                      std::string_view gradient_text);
std::string render_adherence_prompt(const std::string& tmpl, std::string_view target,
                                    std::string_view old_instruction, std::string_view new_instruction,
                                    std::string_view gradient_text);

/// One evaluator request, retried once on an unparseable answer. Only kind,
/// criterion, gradient_scope, score, raw_response and error are filled.
DiagnosticScore score_specificity(const TextualGradient& gradient, std::string_view target,
                                  ChatBackend& evaluator, const DiagnosticOptions& options = {});
DiagnosticScore score_adherence(std::string_view old_instruction, std::string_view new_instruction,
                                const TextualGradient& gradient, std::string_view target,
                                ChatBackend& evaluator, const DiagnosticOptions& options = {});

/// Specificity: every gradient of steps >= 1; a gradient scoped "all" is scored
/// once per criterion of its lane. Adherence: every criterion of every step
/// whose optimizer produced a candidate, against that criterion's gradient (or
/// the joint one). Evaluator failures yield missing scores, not exceptions.
std::vector<DiagnosticScore> score_run(const LoadedRun& run, DiagnosticKind kind, ChatBackend& evaluator,
                                       const DiagnosticOptions& options = {});

nlohmann::json to_json(const DiagnosticScore& score);
DiagnosticScore diagnostic_score_from_json(const nlohmann::json& j);

std::string diagnostics_file_name(DiagnosticKind kind);
void write_diagnostics(const std::filesystem::path& path, const std::vector<DiagnosticScore>& scores);
/// Throws PreconditionError when the file is absent.
std::vector<DiagnosticScore> read_diagnostics(const std::filesystem::path& path);

struct DiagnosticAggregate {
  std::vector<std::pair<std::string, std::string>> group;  // (field, value) in group_by order
  double mean = 0.0;
  std::optional<double> std;  // sample standard deviation; nullopt when n == 1
  int n = 0;
  int missing = 0;
};

/// Groups by any of: kind, mode, validation, seed, step, criterion. Missing
/// scores are counted but excluded; groups without scores are omitted. Rows
/// come out in canonical order (report mode order, criterion order).
std::vector<DiagnosticAggregate> aggregate_diagnostics(const std::vector<DiagnosticScore>& scores,
                                                       const std::vector<std::string>& group_by);

}  // namespace mograd
