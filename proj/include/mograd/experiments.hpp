#pragma once
// Cherry-pick experiment over single-task runs and multi-cell suites with
// their summary rows and mean trajectories.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mograd/pipeline.hpp"

namespace mograd {

enum class SelectionMetric { SpearmanMax, MaeMin, OffByOneMax };

std::string to_string(SelectionMetric metric);
/// Accepts "spearman", "mae" and "off_by_one".
SelectionMetric parse_selection_metric(std::string_view text);
std::vector<SelectionMetric> all_selection_metrics();

struct CherryPickChoice {
  std::string criterion;
  int step = 0;
  std::uint64_t seed = 0;
  std::string instruction;
  double value = 0.0;  // the selection metric of the chosen candidate
};

/// Per criterion, the best single-task candidate by `metric` over all steps and
/// seeds. The pool is accepted candidates for MAE-gated runs and every
/// candidate for ungated runs (or when include_rejected is set). Ties go to
/// the earliest step, then the lowest seed. Throws PreconditionError when a
/// criterion has no candidate or a run is not single-task.
std::vector<CherryPickChoice> select_instructions(const std::vector<SeedRun>& single_task_runs,
                                                  SelectionMetric metric, bool include_rejected = false);

struct CherryPickResult {
  SelectionMetric metric = SelectionMetric::SpearmanMax;
  std::vector<CherryPickChoice> choices;
  JudgePrompt combined;
  MetricVector metrics;
};

/// Assembles the chosen instructions into one prompt over every criterion and
/// evaluates it on `test`.
CherryPickResult cherry_pick(const std::vector<SeedRun>& single_task_runs, SelectionMetric metric,
                             std::span<const Sample> test, ChatBackend& backend, const RunConfig& config);

struct GridCell {
  DecompositionMode mode = DecompositionMode::single_task();
  ValidationPolicy validation = ValidationPolicy::MaeGate;
};

/// Mean over seeds of the incumbent trajectory at one step.
struct TrajectoryPoint {
  int step = 0;
  std::vector<std::pair<std::string, std::optional<double>>> rho;  // criterion order
  std::optional<double> task_rho;
  std::optional<double> hypervolume;
  int seeds = 0;
};

struct SuiteRow {
  DecompositionMode mode = DecompositionMode::single_task();
  ValidationPolicy validation = ValidationPolicy::MaeGate;
  int seeds = 0;
  int failed_seeds = 0;
  std::optional<double> initial;  // mean step-0 task rho
  std::optional<double> best;     // max over steps of the mean trajectory
  std::optional<int> best_step;   // earliest on ties
  std::optional<double> delta;    // best - initial
  std::optional<double> hypervolume;  // mean final-step HVI over completed seeds
  std::string error;
};

std::vector<TrajectoryPoint> mean_trajectory(const std::vector<SeedRun>& runs);
SuiteRow summarize(const DecompositionMode& mode, ValidationPolicy validation, const std::vector<SeedRun>& runs);

struct CellResult {
  GridCell cell;
  std::vector<SeedRun> runs;
  SuiteRow row;
  std::vector<TrajectoryPoint> trajectory;
};

struct SuiteResult {
  std::vector<CellResult> cells;
};

/// Runs every cell (all seeds of base_config) in order. A failing cell is
/// reported in its row and the suite continues. Throws PreconditionError on an
/// empty grid.
SuiteResult run_suite(const std::vector<GridCell>& grid, const RunConfig& base_config, const DatasetSplit& data,
                      ChatBackend& backend, const PipelineOptions& options = {});

/// Every mode in report order crossed with {mae, none}.
std::vector<GridCell> full_grid();

}  // namespace mograd
