#pragma once
// Report emission from run logs: summary tables, trajectories (CSV + SVG),
// diagnostic aggregates and cherry-pick comparisons.

#include <filesystem>
#include <string>
#include <vector>

#include "mograd/diagnostics.hpp"
#include "mograd/experiments.hpp"
#include "mograd/run_log.hpp"

namespace mograd {

/// Groups loaded runs into cells (full-grid order, then any other order).
std::vector<CellResult> cells_from_runs(std::vector<LoadedRun> runs);

std::string summary_markdown(const std::vector<SuiteRow>& rows);
/// Full-precision values; delta equals best - initial exactly.
std::string summary_csv(const std::vector<SuiteRow>& rows);

std::string trajectory_csv(const std::vector<TrajectoryPoint>& trajectory);
/// Line chart of the per-criterion and task-averaged rho series.
std::string trajectory_svg(const std::vector<TrajectoryPoint>& trajectory, const std::string& title);
/// Line chart of the accumulated hypervolume.
std::string hypervolume_svg(const std::vector<TrajectoryPoint>& trajectory, const std::string& title);

/// Mode x validation rows.
std::string diagnostics_by_mode_markdown(const std::vector<DiagnosticScore>& scores);
/// Mode x criterion grid.
std::string diagnostics_by_criterion_markdown(const std::vector<DiagnosticScore>& scores,
                                              const std::vector<Criterion>& criteria);
std::string diagnostics_csv(const std::vector<DiagnosticAggregate>& rows);

struct CherryReport {
  ValidationPolicy validation = ValidationPolicy::MaeGate;
  std::vector<Criterion> criteria;
  using RhoRow = std::vector<std::pair<std::string, std::optional<double>>>;  // criterion order
  RhoRow initial;      // initial prompt over every criterion
  RhoRow single_task;  // per-criterion prompts at the single-task best step
  std::vector<CherryPickResult> results;
};

nlohmann::json to_json(const CherryReport& report);
CherryReport cherry_report_from_json(const nlohmann::json& j);
/// Per selection metric: per-criterion rho and average, against the initial
/// prompt and the single-task baseline.
std::string cherry_markdown(const std::vector<CherryReport>& reports);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Writes summary.md/.csv or trajectory_* files into `out_dir`; returns the
/// files written.
std::vector<std::filesystem::path> write_summary_report(const std::vector<CellResult>& cells,
                                                        const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> write_trajectory_report(const std::vector<CellResult>& cells,
                                                           const std::filesystem::path& out_dir);

}  // namespace mograd
