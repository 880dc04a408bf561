#pragma once
// Command-line entry point, callable in-process.
//
//   mograd run       --mode M --val V [--grid] [--backend B] [--out DIR] ...
//   mograd report    --runs DIR --style summary|trajectory|diagnostics|cherry
//   mograd diagnose  --runs DIR --kind specificity|adherence [--evaluator CONFIG]
//   mograd cherry    --runs DIR [--metric spearman|mae|off_by_one|all]
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <ostream>
#include <string>
#include <vector>

namespace mograd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mograd
