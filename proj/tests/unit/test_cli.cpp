#include <gtest/gtest.h>

#include <sstream>

#include "mograd/cli.hpp"
#include "support/temp_dir.hpp"

using namespace mograd;
using mograd::testing::slurp;
using mograd::testing::spit;
using mograd::testing::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({"run", "--mode", "xyz"}).code, kExitUsage);
  EXPECT_EQ(cli({"run", "--mode", "csc"}).code, kExitUsage);
  EXPECT_EQ(cli({"run", "--val", "sometimes"}).code, kExitUsage);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"report"}).code, kExitUsage);  // --runs is required
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, UnknownConfigKeyIsAUsageError) {
  TempDir dir;
  spit(dir / "cfg.json", R"({"mode": "ccc", "stepz": 3})");
  const auto r = cli({"run", "--config", (dir / "cfg.json").string(), "--out", (dir / "runs").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("stepz"), std::string::npos) << r.err;
}

TEST(Cli, SingleTaskRunImproves) {
  TempDir dir;
  const auto r = cli({"run", "--mode", "single", "--val", "mae", "--steps", "12", "--seeds", "1", "--out",
                      dir.path().string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("| Configuration |"), std::string::npos);
  const auto rows = csv_rows(slurp(dir / "summary.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"mode", "validation", "seeds", "failed_seeds", "initial", "best",
                                               "best_step", "delta", "hvi"}));
  EXPECT_EQ(rows[1][0], "single");
  EXPECT_EQ(rows[1][1], "mae");
  const double initial = std::stod(rows[1][4]);
  const double best = std::stod(rows[1][5]);
  const double delta = std::stod(rows[1][7]);
  EXPECT_EQ(delta, best - initial);
  EXPECT_GT(delta, 0.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "run_single_mae_seed0.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
}

TEST(Cli, ReplayMissFailsAndNamesTheRequest) {
  TempDir dir;
  std::filesystem::create_directories(dir / "fixtures");
  const auto r = cli({"run", "--mode", "ccc", "--steps", "1", "--seeds", "1", "--backend", "replay", "--fixtures",
                      (dir / "fixtures").string(), "--out", (dir / "runs").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("replay"), std::string::npos) << r.err;
}

TEST(Cli, DiagnosticsReportNeedsDiagnoseFirst) {
  TempDir dir;
  ASSERT_EQ(cli({"run", "--mode", "ccc", "--steps", "1", "--seeds", "1", "--out", dir.path().string()}).code,
            kExitOk);
  const auto r = cli({"report", "--runs", dir.path().string(), "--style", "diagnostics"});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("diagnose"), std::string::npos) << r.err;
}

TEST(Cli, ReportsAreByteStable) {
  TempDir dir;
  ASSERT_EQ(cli({"run", "--mode", "ssc", "--val", "none", "--steps", "2", "--seeds", "2", "--out",
                 dir.path().string()})
                .code,
            kExitOk);
  ASSERT_EQ(cli({"diagnose", "--runs", dir.path().string(), "--kind", "specificity"}).code, kExitOk);
  std::map<std::string, std::string> first;
  for (const char* style : {"summary", "trajectory", "diagnostics"}) {
    TempDir out;
    const auto r = cli({"report", "--runs", dir.path().string(), "--style", style, "--out", out.path().string()});
    ASSERT_EQ(r.code, kExitOk) << style << r.err;
    for (const auto& e : std::filesystem::directory_iterator(out.path())) {
      first[e.path().filename().string()] = slurp(e.path());
    }
  }
  for (const char* style : {"summary", "trajectory", "diagnostics"}) {
    TempDir out;
    ASSERT_EQ(cli({"report", "--runs", dir.path().string(), "--style", style, "--out", out.path().string()}).code,
              kExitOk);
    for (const auto& e : std::filesystem::directory_iterator(out.path())) {
      EXPECT_EQ(slurp(e.path()), first.at(e.path().filename().string())) << e.path();
    }
  }
  ASSERT_TRUE(first.count("trajectory_ssc_none.csv"));
  const auto traj = csv_rows(first.at("trajectory_ssc_none.csv"));
  EXPECT_EQ(traj[0], (std::vector<std::string>{"step", "fluency", "relevance", "coherence", "consistency", "task_avg",
                                               "hvi", "seeds"}));
  EXPECT_EQ(traj.size(), 4u);  // steps 0..2
  EXPECT_TRUE(first.count("diagnostics_by_mode.md"));
  EXPECT_TRUE(first.count("summary.csv"));
}

TEST(Cli, CherryOnSingleTaskRuns) {
  TempDir dir;
  ASSERT_EQ(cli({"run", "--mode", "single", "--val", "mae", "--steps", "3", "--seeds", "2", "--out",
                 dir.path().string()})
                .code,
            kExitOk);
  const auto r = cli({"cherry", "--runs", dir.path().string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "cherry_mae.json"));
  const auto again = cli({"report", "--runs", dir.path().string(), "--style", "cherry"});
  ASSERT_EQ(again.code, kExitOk) << again.err;
  EXPECT_EQ(again.out, r.out);
}
