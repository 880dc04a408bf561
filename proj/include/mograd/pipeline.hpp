#pragma once
// The four-stage optimization loop: predict, loss, gradient, optimizer, then
// the validation gate. Decomposition modes decide the call fan-out per stage.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mograd/backend.hpp"
#include "mograd/core.hpp"
#include "mograd/dataset.hpp"
#include "mograd/evaluate.hpp"
#include "mograd/pareto.hpp"
#include "mograd/prompt.hpp"
#include "mograd/stage_prompts.hpp"

namespace mograd {

struct TextualLoss {
  std::string sample_id;
  std::string scope;  // criterion id or "all"
  std::string critique;
};

struct TextualGradient {
  std::string scope;
  std::string text;
  int paragraph_count = 0;
};

enum class GateVerdict { Accepted, Rejected, NoGate };

std::string to_string(GateVerdict verdict);
GateVerdict parse_gate_verdict(std::string_view text);

/// Optimizer output that could not be mapped back onto the instructions.
class OptimizerOutputError : public ParseError {
 public:
  OptimizerOutputError(const std::string& what, std::string raw_output)
      : ParseError(what), raw_output_(std::move(raw_output)) {}

  const std::string& raw_output() const noexcept { return raw_output_; }

 private:
  std::string raw_output_;
};

/// Paragraphs are maximal runs of non-blank lines.
int count_paragraphs(std::string_view text);
std::string truncate_paragraphs(std::string_view text, int limit);

/// Separate loss stage: one critique per (sample, criterion). Combined: one per
/// sample covering all criteria. The single-task mode behaves as Separate.
std::vector<TextualLoss> compute_losses(const DecompositionMode& mode, const JudgePrompt& prompt,
                                        std::span<const Sample> batch,
                                        std::span<const Prediction> predictions,
                                        ChatBackend& backend, const RunConfig& config,
                                        const CallContext& ctx = {},
                                        const PromptTemplates& templates = PromptTemplates::builtin());

/// Separate gradient stage: one gradient per criterion from that criterion's
/// losses only. Combined: one gradient from every loss. A gradient over the
/// paragraph limit is regenerated once, then truncated.
std::vector<TextualGradient> compute_gradients(const DecompositionMode& mode,
                                               std::span<const TextualLoss> losses,
                                               const JudgePrompt& prompt, ChatBackend& backend,
                                               const RunConfig& config, const CallContext& ctx = {},
                                               const PromptTemplates& templates = PromptTemplates::builtin());

/// Separate optimizer stage: one rewrite per criterion from its own gradient.
/// Combined: a single call sees every gradient and rewrites every instruction.
/// Unmappable output is retried once, then OptimizerOutputError is thrown.
JudgePrompt apply_optimizer(const DecompositionMode& mode, const JudgePrompt& prompt,
                            std::span<const TextualGradient> gradients, ChatBackend& backend,
                            const RunConfig& config, const CallContext& ctx = {},
                            const PromptTemplates& templates = PromptTemplates::builtin());

struct GateResult {
  bool accepted = true;
  GateVerdict verdict = GateVerdict::NoGate;
  std::optional<MetricVector> candidate_val;
  std::optional<double> candidate_mae;
  std::optional<double> incumbent_mae;
  std::string cause;  // set when evaluation failed
};

/// MaeGate: accept iff task-averaged validation MAE of the candidate does not
/// exceed the incumbent's. None: accept unconditionally, no evaluation. A
/// transport failure while evaluating rejects the candidate.
GateResult validation_gate(ValidationPolicy policy, const JudgePrompt& candidate,
                           const MetricVector& incumbent_val, std::span<const Sample> val_samples,
                           ChatBackend& backend, const RunConfig& config, const CallContext& ctx = {});
GateResult validation_gate(ValidationPolicy policy, const JudgePrompt& candidate,
                           const JudgePrompt& incumbent, std::span<const Sample> val_samples,
                           ChatBackend& backend, const RunConfig& config, const CallContext& ctx = {});

struct StepTrace {
  int step = 0;
  std::string scope;  // lane: the criterion in single-task runs, otherwise "all"
  std::vector<std::string> minibatch_ids;
  std::vector<TextualLoss> losses;
  std::vector<TextualGradient> gradients;
  InstructionMap old_instructions;
  InstructionMap new_instructions;  // equals old_instructions when no candidate was produced
  GateVerdict verdict = GateVerdict::NoGate;
  std::map<Stage, int> call_counts;
  std::optional<double> candidate_val_mae;
  std::optional<double> incumbent_val_mae;  // after the gate decision
  std::vector<std::string> notes;
};

struct CandidateRecord {
  int step = 0;
  std::uint64_t seed = 0;
  std::string scope;
  JudgePrompt prompt;
  std::optional<MetricVector> val_metrics;
  MetricVector test_metrics;
  bool accepted = true;
};

/// Incumbent state after a step, aggregated over lanes.
struct StepSnapshot {
  int step = 0;
  std::vector<CriterionMetrics> incumbent_test;  // criterion order
  std::optional<double> task_rho;
  std::optional<double> incumbent_val_mae;
  double hypervolume = 0.0;  // archive accumulated up to this step
};

struct SeedRun {
  DecompositionMode mode = DecompositionMode::single_task();
  ValidationPolicy validation = ValidationPolicy::MaeGate;
  std::uint64_t seed = 0;
  std::vector<Criterion> criteria;
  std::vector<std::string> lanes;  // scopes
  std::vector<CandidateRecord> candidates;
  std::vector<StepTrace> traces;
  int completed_steps = -1;  // last step completed by every lane; -1 before step 0
  bool failed = false;
  std::optional<int> failed_step;
  std::string error;
  std::vector<StepSnapshot> trajectory;  // filled by build_trajectory

  /// Step with the highest incumbent task-averaged test rho; earliest on ties.
  std::optional<int> best_step() const;
  std::optional<double> initial_rho() const;
  std::optional<double> best_rho() const;
  std::optional<double> final_hypervolume() const;
};

/// Lanes of a mode: one per criterion for the single-task baseline, one
/// covering every criterion otherwise.
std::vector<std::vector<Criterion>> lanes_for(const DecompositionMode& mode,
                                              const std::vector<Criterion>& criteria);
std::string lane_scope(const std::vector<Criterion>& lane);

/// Per-criterion test rho vector of a candidate set; undefined rho maps to the
/// archive reference (-1).
std::vector<double> rho_vector(const std::vector<CriterionMetrics>& metrics);

/// Recomputes `run.trajectory` from candidates, lanes and completed_steps.
/// Every candidate enters the archive; in single-task runs the point of a step
/// joins each lane's candidate of that step (or its incumbent).
void build_trajectory(SeedRun& run);

/// Archive of every candidate point up to `completed_steps`.
ParetoArchive build_archive(const SeedRun& run);

/// Observer for run-log writers. Events arrive in order from a single thread.
class RunSink {
 public:
  virtual ~RunSink() = default;
  virtual void run_started(const SeedRun& /*run*/, const RunConfig& /*config*/,
                           const std::vector<JudgePrompt>& /*initial_prompts*/) {}
  virtual void step_started(int /*step*/, const std::string& /*scope*/,
                            const std::vector<std::string>& /*minibatch_ids*/) {}
  virtual void llm_calls(int /*step*/, const std::vector<CallRecord>& /*calls*/) {}
  virtual void candidate_evaluated(const CandidateRecord& /*candidate*/) {}
  virtual void gate_decision(int /*step*/, const std::string& /*scope*/, const GateResult& /*gate*/) {}
  virtual void step_completed(const StepTrace& /*trace*/) {}
  virtual void run_error(int /*step*/, const std::string& /*scope*/, const std::string& /*message*/) {}
  virtual void run_completed(const SeedRun& /*run*/) {}
};

struct PipelineOptions {
  const PromptTemplates* templates = nullptr;  // built-in when null
  RunSink* sink = nullptr;
};

struct RunResult {
  RunConfig config;
  std::vector<SeedRun> runs;  // one per seed, in config order
};

/// One seed: step 0 evaluates the initial prompt, then config.steps steps. A
/// fatal stage error marks the run failed at that step and keeps prior traces.
SeedRun run_seed(const RunConfig& config, const DatasetSplit& data, ChatBackend& backend,
                 std::uint64_t seed, const PipelineOptions& options = {});

RunResult run_optimization(const RunConfig& config, const DatasetSplit& data, ChatBackend& backend,
                           const PipelineOptions& options = {});

}  // namespace mograd
