#include <gtest/gtest.h>

#include <random>
#include <tuple>

#include "mograd/experiments.hpp"
#include "mograd/synthetic.hpp"
#include "support/scripted_backend.hpp"

using namespace mograd;
using mograd::testing::ScriptedBackend;

namespace {

// Single-task runs with candidate metrics drawn from a coarse grid so ties are common.
std::vector<SeedRun> scripted_runs(std::mt19937_64& rng, ValidationPolicy val, int steps, int seeds) {
  std::uniform_int_distribution<int> grid(0, 4);
  std::bernoulli_distribution accept(0.6);
  const auto criteria = default_criteria();
  std::vector<SeedRun> runs;
  for (int s = 0; s < seeds; ++s) {
    SeedRun run;
    run.mode = DecompositionMode::single_task();
    run.validation = val;
    run.seed = static_cast<std::uint64_t>(10 + s);
    run.criteria = criteria;
    run.completed_steps = steps;
    for (const auto& c : criteria) {
      run.lanes.push_back(c.id);
      for (int step = 0; step <= steps; ++step) {
        CandidateRecord cand{step, run.seed, c.id,
                             JudgePrompt(JudgePrompt::default_skeleton({c}), {c},
                                         {{c.id, fmt::format("{} s{} t{}", c.id, run.seed, step)}}),
                             std::nullopt, {}, true};
        CriterionMetrics m{c.id, 0.1 * grid(rng), 0.25 * grid(rng), 0.2 * grid(rng)};
        if (grid(rng) == 0) m.rho.reset();
        cand.test_metrics.per_criterion = {m};
        cand.accepted = step == 0 || accept(rng);
        run.candidates.push_back(std::move(cand));
      }
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

struct Pick {
  int step;
  std::uint64_t seed;
  std::string instruction;
};

std::optional<Pick> oracle(const std::vector<SeedRun>& runs, const std::string& criterion, SelectionMetric metric,
                           bool include_rejected) {
  // Lexicographic key: (oriented value, step, seed); smallest wins.
  std::optional<std::tuple<double, int, std::uint64_t>> best_key;
  std::optional<Pick> best;
  for (const auto& r : runs) {
    for (const auto& c : r.candidates) {
      if (c.scope != criterion) continue;
      if (!(include_rejected || r.validation == ValidationPolicy::None || c.accepted)) continue;
      const auto& m = c.test_metrics.per_criterion.front();
      double key = 0;
      if (metric == SelectionMetric::SpearmanMax) {
        if (!m.rho) continue;
        key = -*m.rho;
      } else if (metric == SelectionMetric::MaeMin) {
        key = m.mae;
      } else {
        key = -m.off_by_one;
      }
      const auto k = std::make_tuple(key, c.step, c.seed);
      if (!best_key || k < *best_key) {
        best_key = k;
        best = Pick{c.step, c.seed, c.prompt.instruction(criterion)};
      }
    }
  }
  return best;
}

std::vector<SeedRun> synthetic_single(int steps, std::vector<std::uint64_t> seeds) {
  static const auto world = SyntheticWorld::generate(640, 7);
  const auto split = split_dataset(world.samples, world.criteria, 0);
  SyntheticBackend backend(world);
  RunConfig cfg;
  cfg.mode = DecompositionMode::single_task();
  cfg.validation = ValidationPolicy::MaeGate;
  cfg.steps = steps;
  cfg.seeds = std::move(seeds);
  return run_optimization(cfg, split, backend).runs;
}

}  // namespace

TEST(CherryPick, MatchesBruteForceArgBest) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto val = trial % 2 ? ValidationPolicy::None : ValidationPolicy::MaeGate;
    const bool include_rejected = trial % 5 == 0;
    const auto runs = scripted_runs(rng, val, 4, 3);
    for (auto metric : all_selection_metrics()) {
      std::vector<CherryPickChoice> got;
      try {
        got = select_instructions(runs, metric, include_rejected);
      } catch (const PreconditionError&) {
        // only legitimate when some criterion has nothing selectable
        bool any_missing = false;
        for (const auto& c : default_criteria()) any_missing |= !oracle(runs, c.id, metric, include_rejected);
        EXPECT_TRUE(any_missing);
        continue;
      }
      const auto criteria = default_criteria();
      ASSERT_EQ(got.size(), criteria.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        const auto& c = criteria[i];
        const auto want = oracle(runs, c.id, metric, include_rejected);
        ASSERT_TRUE(want.has_value());
        EXPECT_EQ(got[i].criterion, c.id);
        EXPECT_EQ(got[i].step, want->step) << trial << " " << to_string(metric) << " " << c.id;
        EXPECT_EQ(got[i].seed, want->seed);
        EXPECT_EQ(got[i].instruction, want->instruction);
      }
    }
  }
}

TEST(CherryPick, TiesGoToEarliestStepThenLowestSeed) {
  std::mt19937_64 rng(1);
  auto runs = scripted_runs(rng, ValidationPolicy::None, 3, 2);
  for (auto& r : runs) {
    for (auto& c : r.candidates) c.test_metrics.per_criterion.front() = {c.scope, 0.5, 1.0, 0.5};
  }
  for (auto metric : all_selection_metrics()) {
    for (const auto& ch : select_instructions(runs, metric)) {
      EXPECT_EQ(ch.step, 0);
      EXPECT_EQ(ch.seed, 10u);
    }
  }
  // Step 2 of the second seed is the unique best for fluency.
  for (auto& c : runs[1].candidates) {
    if (c.scope == "fluency" && c.step == 2) c.test_metrics.per_criterion.front().mae = 0.25;
  }
  // A later step with the same value does not displace it.
  for (auto& c : runs[0].candidates) {
    if (c.scope == "fluency" && c.step == 3) c.test_metrics.per_criterion.front().mae = 0.25;
  }
  const auto ch = select_instructions(runs, SelectionMetric::MaeMin).front();
  EXPECT_EQ(ch.step, 2);
  EXPECT_EQ(ch.seed, 11u);
  // Same step on the lower seed wins.
  for (auto& c : runs[0].candidates) {
    if (c.scope == "fluency" && c.step == 2) c.test_metrics.per_criterion.front().mae = 0.25;
  }
  const auto again = select_instructions(runs, SelectionMetric::MaeMin).front();
  EXPECT_EQ(again.step, 2);
  EXPECT_EQ(again.seed, 10u);
}

TEST(CherryPick, GatedPoolExcludesRejectedUnlessAsked) {
  std::mt19937_64 rng(5);
  auto runs = scripted_runs(rng, ValidationPolicy::MaeGate, 2, 1);
  for (auto& c : runs[0].candidates) {
    c.test_metrics.per_criterion.front() = {c.scope, 0.1, 2.0, 0.1};
    if (c.step == 2) {
      c.accepted = false;
      c.test_metrics.per_criterion.front() = {c.scope, 0.9, 0.1, 0.9};
    }
    if (c.step == 1) c.accepted = true;
  }
  for (const auto& ch : select_instructions(runs, SelectionMetric::SpearmanMax)) EXPECT_EQ(ch.step, 0);
  for (const auto& ch : select_instructions(runs, SelectionMetric::SpearmanMax, true)) EXPECT_EQ(ch.step, 2);
  runs[0].validation = ValidationPolicy::None;
  for (const auto& ch : select_instructions(runs, SelectionMetric::SpearmanMax)) EXPECT_EQ(ch.step, 2);
}

TEST(CherryPick, Preconditions) {
  EXPECT_THROW(select_instructions({}, SelectionMetric::MaeMin), PreconditionError);
  std::mt19937_64 rng(9);
  auto runs = scripted_runs(rng, ValidationPolicy::None, 1, 1);
  auto no_rel = runs;
  std::erase_if(no_rel[0].candidates, [](const CandidateRecord& c) { return c.scope == "relevance"; });
  EXPECT_THROW(select_instructions(no_rel, SelectionMetric::MaeMin), PreconditionError);
  auto multi = runs;
  multi[0].mode = parse_mode("ccc");
  EXPECT_THROW(select_instructions(multi, SelectionMetric::MaeMin), PreconditionError);
}

TEST(CherryPick, AssemblesOnePromptOverEveryCriterion) {
  std::mt19937_64 rng(3);
  const auto runs = scripted_runs(rng, ValidationPolicy::None, 2, 2);
  ScriptedBackend backend(mograd::testing::well_formed_handler());
  const auto split = mograd::testing::small_split();
  const auto res = cherry_pick(runs, SelectionMetric::OffByOneMax, split.test, backend, RunConfig{});
  EXPECT_EQ(res.combined.criteria(), default_criteria());
  EXPECT_EQ(res.combined.skeleton_fingerprint(), JudgePrompt::initial(default_criteria()).skeleton_fingerprint());
  for (const auto& ch : res.choices) EXPECT_EQ(res.combined.instruction(ch.criterion), ch.instruction);
  EXPECT_EQ(res.metrics.per_criterion.size(), 4u);
  EXPECT_EQ(backend.count(Stage::Task), static_cast<int>(split.test.size()));
}

TEST(CherryPick, SyntheticRunsGiveAnImprovedCombinedPrompt) {
  const auto runs = synthetic_single(6, {0, 1});
  const auto world = SyntheticWorld::generate(640, 7);
  const auto split = split_dataset(world.samples, world.criteria, 0);
  SyntheticBackend backend(world);
  const auto initial = evaluate_prompt(JudgePrompt::initial(world.criteria), split.test, backend, RunConfig{});
  const auto res = cherry_pick(runs, SelectionMetric::SpearmanMax, split.test, backend, RunConfig{});
  ASSERT_TRUE(res.metrics.task_averaged_rho());
  EXPECT_GT(*res.metrics.task_averaged_rho(), *initial.task_averaged_rho());
}

TEST(Suite, FullGridShape) {
  const auto grid = full_grid();
  ASSERT_EQ(grid.size(), 10u);
  EXPECT_EQ(grid[0].mode, DecompositionMode::single_task());
  EXPECT_EQ(grid[0].validation, ValidationPolicy::MaeGate);
  EXPECT_EQ(grid[1].validation, ValidationPolicy::None);
  ScriptedBackend backend(mograd::testing::well_formed_handler());
  EXPECT_THROW(run_suite({}, RunConfig{}, mograd::testing::small_split(), backend), PreconditionError);
}

TEST(Suite, SyntheticSuiteFillsEveryRow) {
  const auto world = SyntheticWorld::generate(640, 7);
  const auto split = split_dataset(world.samples, world.criteria, 0);
  SyntheticBackend backend(world);
  RunConfig cfg;
  cfg.steps = 2;
  cfg.seeds = {0, 1, 2};
  const auto suite = run_suite(full_grid(), cfg, split, backend);
  ASSERT_EQ(suite.cells.size(), 10u);
  for (const auto& cell : suite.cells) {
    const auto& row = cell.row;
    SCOPED_TRACE(cell.cell.mode.code() + "/" + to_string(cell.cell.validation));
    EXPECT_TRUE(row.error.empty()) << row.error;
    EXPECT_EQ(row.seeds, 3);
    ASSERT_TRUE(row.initial && row.best && row.delta && row.hypervolume && row.best_step);
    EXPECT_EQ(*row.delta, *row.best - *row.initial);
    EXPECT_GE(*row.delta, 0.0);
    double init = 0.0;
    for (const auto& r : cell.runs) init += *r.trajectory.front().task_rho;
    EXPECT_NEAR(*row.initial, init / 3.0, 1e-12);
    ASSERT_EQ(cell.trajectory.size(), 3u);
    double best = -2.0;
    for (const auto& p : cell.trajectory) best = std::max(best, *p.task_rho);
    EXPECT_EQ(*row.best, best);
    EXPECT_EQ(*cell.trajectory[*row.best_step].task_rho, best);
  }
}

TEST(Suite, MeanTrajectoryAveragesSeeds) {
  SeedRun a, b;
  a.criteria = b.criteria = default_criteria();
  for (int s = 0; s < 2; ++s) {
    StepSnapshot sa, sb;
    sa.step = sb.step = s;
    for (const auto& c : default_criteria()) {
      sa.incumbent_test.push_back({c.id, 0.2 + s, 1.0, 0.5});
      sb.incumbent_test.push_back({c.id, c.id == "fluency" ? std::nullopt : std::optional<double>(0.4), 1.0, 0.5});
    }
    sa.task_rho = 0.2 + s;
    sb.task_rho = 0.4;
    sa.hypervolume = 1.0;
    sb.hypervolume = 2.0;
    a.trajectory.push_back(sa);
    if (s == 0) b.trajectory.push_back(sb);
  }
  const auto t = mean_trajectory({a, b});
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].seeds, 2);
  EXPECT_NEAR(*t[0].task_rho, 0.3, 1e-12);
  EXPECT_NEAR(*t[0].hypervolume, 1.5, 1e-12);
  EXPECT_NEAR(*t[0].rho[0].second, 0.2, 1e-12);  // fluency undefined in b
  EXPECT_NEAR(*t[0].rho[1].second, 0.3, 1e-12);
  EXPECT_EQ(t[1].seeds, 1);
  EXPECT_NEAR(*t[1].task_rho, 1.2, 1e-12);
}
