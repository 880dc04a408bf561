#include "mograd/experiments.hpp"

#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace mograd {

std::string to_string(SelectionMetric metric) {
  switch (metric) {
    case SelectionMetric::SpearmanMax: return "spearman";
    case SelectionMetric::MaeMin: return "mae";
    case SelectionMetric::OffByOneMax: return "off_by_one";
  }
  return "?";
}

SelectionMetric parse_selection_metric(std::string_view text) {
  if (text == "spearman") return SelectionMetric::SpearmanMax;
  if (text == "mae") return SelectionMetric::MaeMin;
  if (text == "off_by_one") return SelectionMetric::OffByOneMax;
  throw ConfigError(fmt::format("unknown selection metric '{}'", text));
}

std::vector<SelectionMetric> all_selection_metrics() {
  return {SelectionMetric::SpearmanMax, SelectionMetric::OffByOneMax, SelectionMetric::MaeMin};
}

std::vector<CherryPickChoice> select_instructions(const std::vector<SeedRun>& runs, SelectionMetric metric,
                                                  bool include_rejected) {
  if (runs.empty()) throw PreconditionError("cherry-pick needs at least one single-task run");
  for (const auto& r : runs) {
    if (!r.mode.is_single_task()) throw PreconditionError("cherry-pick only accepts single-task runs");
  }
  const auto& criteria = runs.front().criteria;
  std::vector<CherryPickChoice> out;
  for (const auto& c : criteria) {
    std::optional<CherryPickChoice> best;
    for (const auto& run : runs) {
      const bool pool_all = include_rejected || run.validation == ValidationPolicy::None;
      for (const auto& cand : run.candidates) {
        if (cand.scope != c.id || cand.step > run.completed_steps) continue;
        if (!pool_all && !cand.accepted) continue;
        const auto& m = cand.test_metrics.at(c.id);
        double value = 0.0;
        switch (metric) {
          case SelectionMetric::SpearmanMax:
            if (!m.rho) continue;
            value = *m.rho;
            break;
          case SelectionMetric::MaeMin: value = m.mae; break;
          case SelectionMetric::OffByOneMax: value = m.off_by_one; break;
        }
        CherryPickChoice choice{c.id, cand.step, cand.seed, cand.prompt.instruction(c.id), value};
        bool better = !best;
        if (best) {
          const bool strictly = metric == SelectionMetric::MaeMin ? value < best->value : value > best->value;
          const bool tie = value == best->value;
          better = strictly || (tie && (choice.step < best->step ||
                                        (choice.step == best->step && choice.seed < best->seed)));
        }
        if (better) best = std::move(choice);
      }
    }
    if (!best) throw PreconditionError(fmt::format("no single-task candidate available for '{}'", c.id));
    out.push_back(std::move(*best));
  }
  return out;
}

CherryPickResult cherry_pick(const std::vector<SeedRun>& runs, SelectionMetric metric, std::span<const Sample> test,
                             ChatBackend& backend, const RunConfig& config) {
  auto choices = select_instructions(runs, metric, config.cherry_pick_include_rejected);
  const auto& criteria = runs.front().criteria;
  InstructionMap instructions;
  for (const auto& ch : choices) instructions[ch.criterion] = ch.instruction;
  JudgePrompt combined(JudgePrompt::default_skeleton(criteria), criteria, std::move(instructions));
  MetricVector metrics = evaluate_prompt(combined, test, backend, config);
  return {metric, std::move(choices), std::move(combined), std::move(metrics)};
}

std::vector<TrajectoryPoint> mean_trajectory(const std::vector<SeedRun>& runs) {
  std::vector<TrajectoryPoint> out;
  if (runs.empty()) return out;
  const auto& criteria = runs.front().criteria;
  std::size_t steps = 0;
  for (const auto& r : runs) steps = std::max(steps, r.trajectory.size());
  for (std::size_t s = 0; s < steps; ++s) {
    TrajectoryPoint p;
    p.step = static_cast<int>(s);
    std::map<std::string, std::pair<double, int>> rho_sums;
    double task_sum = 0.0, hv_sum = 0.0;
    int task_n = 0;
    for (const auto& r : runs) {
      if (s >= r.trajectory.size()) continue;
      const auto& snap = r.trajectory[s];
      ++p.seeds;
      for (const auto& m : snap.incumbent_test) {
        auto& [sum, n] = rho_sums[m.criterion];
        if (m.rho) {
          sum += *m.rho;
          ++n;
        }
      }
      if (snap.task_rho) {
        task_sum += *snap.task_rho;
        ++task_n;
      }
      hv_sum += snap.hypervolume;
    }
    for (const auto& c : criteria) {
      const auto it = rho_sums.find(c.id);
      std::optional<double> v;
      if (it != rho_sums.end() && it->second.second > 0) v = it->second.first / it->second.second;
      p.rho.emplace_back(c.id, v);
    }
    if (task_n > 0) p.task_rho = task_sum / task_n;
    if (p.seeds > 0) p.hypervolume = hv_sum / p.seeds;
    out.push_back(std::move(p));
  }
  return out;
}

SuiteRow summarize(const DecompositionMode& mode, ValidationPolicy validation, const std::vector<SeedRun>& runs) {
  SuiteRow row;
  row.mode = mode;
  row.validation = validation;
  row.seeds = static_cast<int>(runs.size());
  double hv_sum = 0.0;
  int hv_n = 0;
  for (const auto& r : runs) {
    if (r.failed) {
      ++row.failed_seeds;
      if (!row.error.empty()) row.error += "; ";
      row.error += fmt::format("seed {} failed at step {}: {}", r.seed, r.failed_step.value_or(-1), r.error);
      continue;
    }
    if (auto hv = r.final_hypervolume()) {
      hv_sum += *hv;
      ++hv_n;
    }
  }
  if (hv_n > 0) row.hypervolume = hv_sum / hv_n;
  const auto traj = mean_trajectory(runs);
  if (!traj.empty()) row.initial = traj.front().task_rho;
  for (const auto& p : traj) {
    if (p.task_rho && (!row.best || *p.task_rho > *row.best)) {
      row.best = p.task_rho;
      row.best_step = p.step;
    }
  }
  if (row.best && row.initial) row.delta = *row.best - *row.initial;
  return row;
}

SuiteResult run_suite(const std::vector<GridCell>& grid, const RunConfig& base_config, const DatasetSplit& data,
                      ChatBackend& backend, const PipelineOptions& options) {
  if (grid.empty()) throw PreconditionError("suite grid is empty");
  SuiteResult result;
  for (const auto& cell : grid) {
    CellResult cr;
    cr.cell = cell;
    RunConfig config = base_config;
    config.mode = cell.mode;
    config.validation = cell.validation;
    try {
      cr.runs = run_optimization(config, data, backend, options).runs;
      cr.row = summarize(cell.mode, cell.validation, cr.runs);
      cr.trajectory = mean_trajectory(cr.runs);
    } catch (const std::exception& e) {
      spdlog::error("suite cell {}/{} failed: {}", cell.mode.code(), to_string(cell.validation), e.what());
      cr.row.mode = cell.mode;
      cr.row.validation = cell.validation;
      cr.row.error = e.what();
    }
    result.cells.push_back(std::move(cr));
  }
  return result;
}

std::vector<GridCell> full_grid() {
  std::vector<GridCell> grid;
  for (const auto& m : all_modes()) {
    for (auto v : {ValidationPolicy::MaeGate, ValidationPolicy::None}) grid.push_back({m, v});
  }
  return grid;
}

}  // namespace mograd
