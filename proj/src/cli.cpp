#include "mograd/cli.hpp"

#include <fstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mograd/config.hpp"
#include "mograd/diagnostics.hpp"
#include "mograd/experiments.hpp"
#include "mograd/report.hpp"
#include "mograd/run_log.hpp"

namespace mograd {

namespace {

constexpr const char* kManifest = "manifest.json";

// Flags shared by every command that builds a backend or loads data.
struct SourceFlags {
  std::string config;
  std::string backend;
  std::string fixtures;
  std::string record;
  std::string dataset;
  std::string world;
  std::optional<std::uint64_t> world_seed;
  std::string prompts;

  void add(CLI::App& app) {
    app.add_option("--config", config, "Flat JSON config file");
    app.add_option("--backend", backend, "live, replay or synthetic")
        ->check(CLI::IsMember({"live", "replay", "synthetic"}));
    app.add_option("--fixtures", fixtures, "Fixture directory served by the replay backend");
    app.add_option("--record", record, "Record every response into this fixture directory");
    app.add_option("--dataset", dataset, "JSONL dataset file");
    app.add_option("--world", world, "Synthetic world file");
    app.add_option("--world-seed", world_seed, "Seed of the generated synthetic world");
    app.add_option("--prompts", prompts, "Directory overriding the stage prompt templates");
  }

  AppConfig apply(AppConfig c) const {
    if (!config.empty()) c = load_app_config(config, std::move(c));
    if (!backend.empty()) c.backend = backend;
    if (!fixtures.empty()) c.fixtures = fixtures;
    if (!record.empty()) c.record = record;
    if (!dataset.empty()) c.dataset = dataset;
    if (!world.empty()) c.world = world;
    if (world_seed) c.world_seed = *world_seed;
    if (!prompts.empty()) c.prompts_dir = prompts;
    return c;
  }
};

AppConfig manifest_or_default(const std::filesystem::path& runs_dir) {
  const auto path = runs_dir / kManifest;
  if (!std::filesystem::exists(path)) return {};
  AppConfig c = load_app_config(path);
  // Recording is a property of the original run, not of later commands.
  c.record.reset();
  return c;
}

PromptTemplates templates_for(const AppConfig& c) {
  return c.prompts_dir ? PromptTemplates::with_overrides(*c.prompts_dir) : PromptTemplates::builtin();
}

int cmd_run(const SourceFlags& src, const std::string& mode, const std::string& val, std::optional<int> seeds,
            std::optional<int> steps, std::optional<int> minibatch, std::optional<int> parallelism, bool grid,
            const std::string& out_dir, std::ostream& out, std::ostream& err) {
  AppConfig c = src.apply({});
  if (!mode.empty()) c.run.mode = parse_mode(mode);
  if (!val.empty()) c.run.validation = parse_validation(val);
  if (seeds) {
    c.run.seeds.clear();
    for (int i = 0; i < *seeds; ++i) c.run.seeds.push_back(static_cast<std::uint64_t>(i));
  }
  if (steps) c.run.steps = *steps;
  if (minibatch) c.run.minibatch_size = *minibatch;
  if (parallelism) {
    c.run.parallelism = *parallelism;
    c.live.max_in_flight = *parallelism;
  }
  c.run.validate();

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_text(dir / kManifest, to_json(c).dump(2) + "\n");

  auto data = load_data(c);
  BackendStack backend(c, data.world);
  const auto templates = templates_for(c);
  RunLogWriter writer(dir);
  PipelineOptions options{&templates, &writer};

  const std::vector<GridCell> cells = grid ? full_grid() : std::vector<GridCell>{{c.run.mode, c.run.validation}};
  SuiteResult suite = run_suite(cells, c.run, data.split, backend.get(), options);

  std::vector<SuiteRow> rows;
  for (const auto& cell : suite.cells) rows.push_back(cell.row);
  write_summary_report(suite.cells, dir);
  out << summary_markdown(rows);

  int status = kExitOk;
  for (const auto& cell : suite.cells) {
    if (!cell.row.error.empty() && cell.runs.empty()) {
      err << fmt::format("error: {} / {}: {}\n", cell.cell.mode.code(), to_string(cell.cell.validation), cell.row.error);
      status = kExitFailure;
    }
    for (const auto& run : cell.runs) {
      if (!run.failed) continue;
      err << fmt::format("error: {} / {} seed {} failed at step {}: {}\n", cell.cell.mode.code(),
                         to_string(cell.cell.validation), run.seed, run.failed_step.value_or(-1), run.error);
      status = kExitFailure;
    }
  }
  return status;
}

int cmd_report(const std::string& runs_dir, const std::string& style, const std::string& out_dir, std::ostream& out) {
  const std::filesystem::path runs(runs_dir);
  const std::filesystem::path dest = out_dir.empty() ? runs : std::filesystem::path(out_dir);
  if (style == "summary" || style == "trajectory") {
    auto cells = cells_from_runs(load_run_logs(runs));
    const auto files = style == "summary" ? write_summary_report(cells, dest) : write_trajectory_report(cells, dest);
    if (style == "summary") {
      std::vector<SuiteRow> rows;
      for (const auto& c : cells) rows.push_back(c.row);
      out << summary_markdown(rows);
    }
    for (const auto& f : files) out << "wrote " << f.string() << "\n";
    return kExitOk;
  }
  if (style == "diagnostics") {
    std::vector<DiagnosticScore> scores;
    for (auto kind : {DiagnosticKind::Specificity, DiagnosticKind::Adherence}) {
      const auto path = runs / diagnostics_file_name(kind);
      if (!std::filesystem::exists(path)) continue;
      auto part = read_diagnostics(path);
      scores.insert(scores.end(), part.begin(), part.end());
    }
    if (scores.empty()) {
      throw PreconditionError(fmt::format("no diagnostics files in {}; run `diagnose` first", runs.string()));
    }
    const auto criteria = load_run_logs(runs).front().run.criteria;
    const std::string by_mode = diagnostics_by_mode_markdown(scores);
    const std::string by_criterion = diagnostics_by_criterion_markdown(scores, criteria);
    write_text(dest / "diagnostics_by_mode.md", by_mode);
    write_text(dest / "diagnostics_by_criterion.md", by_criterion);
    write_text(dest / "diagnostics_by_mode.csv",
               diagnostics_csv(aggregate_diagnostics(scores, {"kind", "mode", "validation"})));
    write_text(dest / "diagnostics_by_criterion.csv",
               diagnostics_csv(aggregate_diagnostics(scores, {"kind", "mode", "criterion"})));
    out << by_mode << "\n" << by_criterion;
    return kExitOk;
  }
  // cherry
  std::vector<CherryReport> reports;
  for (auto v : {ValidationPolicy::MaeGate, ValidationPolicy::None}) {
    const auto path = runs / fmt::format("cherry_{}.json", to_string(v));
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path);
    reports.push_back(cherry_report_from_json(nlohmann::json::parse(in)));
  }
  if (reports.empty()) {
    throw PreconditionError(fmt::format("no cherry-pick results in {}; run `cherry` first", runs.string()));
  }
  const std::string md = cherry_markdown(reports);
  write_text(dest / "cherry.md", md);
  out << md;
  return kExitOk;
}

int cmd_diagnose(const SourceFlags& src, const std::string& runs_dir, const std::string& kind_text,
                 const std::string& evaluator, std::ostream& out, std::ostream& err) {
  const std::filesystem::path runs(runs_dir);
  AppConfig c = manifest_or_default(runs);
  if (!evaluator.empty()) c = load_app_config(evaluator, std::move(c));
  c = src.apply(std::move(c));
  const auto kind = parse_diagnostic_kind(kind_text);
  auto logs = load_run_logs(runs);

  std::optional<SyntheticWorld> world;
  if (c.backend == "synthetic") world = load_data(c).world;
  BackendStack backend(c, world);
  const auto templates = templates_for(c);
  DiagnosticOptions options{&templates, c.run.temperatures.diagnostic, c.run.parallelism};

  std::vector<DiagnosticScore> scores;
  for (const auto& log : logs) {
    auto part = score_run(log, kind, backend.get(), options);
    scores.insert(scores.end(), part.begin(), part.end());
  }
  if (scores.empty()) throw PreconditionError("the run logs contain no step to diagnose");
  const auto path = runs / diagnostics_file_name(kind);
  write_diagnostics(path, scores);
  const auto missing = std::count_if(scores.begin(), scores.end(), [](const auto& s) { return !s.score; });
  out << fmt::format("wrote {} {} scores to {}\n", scores.size(), to_string(kind), path.string());
  if (missing > 0) err << fmt::format("warning: {} scores are missing (see raw_response/error)\n", missing);
  out << diagnostics_by_mode_markdown(scores);
  return kExitOk;
}

int cmd_cherry(const SourceFlags& src, const std::string& runs_dir, const std::string& metric_text,
               std::ostream& out) {
  const std::filesystem::path runs(runs_dir);
  AppConfig c = src.apply(manifest_or_default(runs));
  auto cells = cells_from_runs(load_run_logs(runs));
  auto data = load_data(c);
  BackendStack backend(c, data.world);

  std::vector<SelectionMetric> metrics =
      metric_text == "all" ? all_selection_metrics() : std::vector<SelectionMetric>{parse_selection_metric(metric_text)};
  std::vector<CherryReport> reports;
  for (const auto& cell : cells) {
    if (!cell.cell.mode.is_single_task() || cell.runs.empty()) continue;
    CherryReport report;
    report.validation = cell.cell.validation;
    report.criteria = cell.runs.front().criteria;
    const auto initial = evaluate_prompt(JudgePrompt::initial(report.criteria), data.split.test, backend.get(), c.run);
    for (const auto& m : initial.per_criterion) report.initial.emplace_back(m.criterion, m.rho);
    if (cell.row.best_step) report.single_task = cell.trajectory[static_cast<std::size_t>(*cell.row.best_step)].rho;
    for (auto m : metrics) report.results.push_back(cherry_pick(cell.runs, m, data.split.test, backend.get(), c.run));
    write_text(runs / fmt::format("cherry_{}.json", to_string(report.validation)), to_json(report).dump(2) + "\n");
    reports.push_back(std::move(report));
  }
  if (reports.empty()) throw PreconditionError(fmt::format("no single-task run logs in {}", runs.string()));
  out << cherry_markdown(reports);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-objective textual-gradient optimization of LLM-judge prompts", "mograd"};
  app.require_subcommand(1);

  SourceFlags run_src;
  std::string mode, val, out_dir = "runs";
  std::optional<int> seeds, steps, minibatch, parallelism;
  bool grid = false;
  auto* run = app.add_subcommand("run", "Run the optimization (one cell, or the full grid)");
  run->add_option("--mode", mode, "sss, ssc, scc, ccc or single")
      ->check(CLI::IsMember({"sss", "ssc", "scc", "ccc", "single"}, CLI::ignore_case));
  run->add_option("--val", val, "mae or none")->check(CLI::IsMember({"mae", "none"}));
  run->add_option("--seeds", seeds, "Number of seeds (0..N-1)")->check(CLI::PositiveNumber);
  run->add_option("--steps", steps, "Optimization steps")->check(CLI::PositiveNumber);
  run->add_option("--minibatch", minibatch, "Minibatch size")->check(CLI::PositiveNumber);
  run->add_option("--parallelism", parallelism, "Concurrent backend calls")->check(CLI::PositiveNumber);
  run->add_flag("--grid", grid, "Run every mode crossed with both validation policies");
  run->add_option("--out", out_dir, "Output directory for run logs and the summary");
  run_src.add(*run);

  std::string runs_dir, style = "summary", report_out;
  auto* report = app.add_subcommand("report", "Emit reports from run logs");
  report->add_option("--runs", runs_dir, "Run-log directory")->required();
  report->add_option("--style", style, "summary, trajectory, diagnostics or cherry")
      ->check(CLI::IsMember({"summary", "trajectory", "diagnostics", "cherry"}));
  report->add_option("--out", report_out, "Output directory (default: the run-log directory)");

  SourceFlags diag_src;
  std::string diag_runs, kind, evaluator;
  auto* diagnose = app.add_subcommand("diagnose", "Score gradients or instruction edits in run logs");
  diagnose->add_option("--runs", diag_runs, "Run-log directory")->required();
  diagnose->add_option("--kind", kind, "specificity or adherence")
      ->required()
      ->check(CLI::IsMember({"specificity", "adherence"}));
  diagnose->add_option("--evaluator", evaluator, "Config file describing the evaluator backend");
  diag_src.add(*diagnose);

  SourceFlags cherry_src;
  std::string cherry_runs, metric = "all";
  auto* cherry = app.add_subcommand("cherry", "Assemble the best single-task instructions and evaluate them");
  cherry->add_option("--runs", cherry_runs, "Run-log directory")->required();
  cherry->add_option("--metric", metric, "spearman, mae, off_by_one or all")
      ->check(CLI::IsMember({"spearman", "mae", "off_by_one", "all"}));
  cherry_src.add(*cherry);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      return cmd_run(run_src, mode, val, seeds, steps, minibatch, parallelism, grid, out_dir, out, err);
    }
    if (*report) return cmd_report(runs_dir, style, report_out, out);
    if (*diagnose) return cmd_diagnose(diag_src, diag_runs, kind, evaluator, out, err);
    return cmd_cherry(cherry_src, cherry_runs, metric, out);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidModeError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace mograd
