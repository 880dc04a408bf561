#pragma once
// Domain types shared across the engine: criteria, samples, predictions,
// decomposition modes, run configuration and metric vectors.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mograd/error.hpp"

namespace mograd {

/// Scope tag used when a stage covers every criterion of a run at once.
inline constexpr std::string_view kAllScope = "all";

struct Criterion {
  std::string id;
  int scale_min = 1;
  int scale_max = 5;

  int midpoint() const { return (scale_min + scale_max) / 2; }
  bool operator==(const Criterion&) const = default;
};

/// fluency, relevance, coherence, consistency on a 1-5 scale, in canonical order.
std::vector<Criterion> default_criteria();

/// Looks up a criterion by id; throws ConfigError when absent.
const Criterion& find_criterion(const std::vector<Criterion>& criteria, std::string_view id);

std::vector<std::string> criterion_ids(const std::vector<Criterion>& criteria);

struct Sample {
  std::string id;
  std::string source_text;
  std::string summary_text;
  std::map<std::string, double> truth;  // mean expert score per criterion id
};

using InstructionMap = std::map<std::string, std::string>;

struct Prediction {
  std::string sample_id;
  std::map<std::string, int> scores;
  int parse_attempts = 1;
  bool imputed = false;
};

enum class StageMode { Separate, Combined };

/// Which pipeline stages run per criterion and which run jointly.
/// Only SSS, SSC, SCC, CCC and the single-task baseline exist.
class DecompositionMode {
 public:
  static DecompositionMode single_task();
  /// Throws InvalidModeError for any triple other than the four defined codes.
  static DecompositionMode triple(StageMode loss, StageMode gradient, StageMode optimizer);

  bool is_single_task() const { return single_; }
  StageMode loss() const { return loss_; }
  StageMode gradient() const { return gradient_; }
  StageMode optimizer() const { return optimizer_; }

  /// Lower-case code: "sss", "ssc", "scc", "ccc" or "single".
  std::string code() const;

  bool operator==(const DecompositionMode&) const = default;

 private:
  DecompositionMode(bool single, StageMode l, StageMode g, StageMode o)
      : single_(single), loss_(l), gradient_(g), optimizer_(o) {}

  bool single_;
  StageMode loss_;
  StageMode gradient_;
  StageMode optimizer_;
};

/// Case-insensitive; accepts sss, ssc, scc, ccc and single.
DecompositionMode parse_mode(std::string_view code);

/// The five modes in report order: single, sss, ssc, scc, ccc.
std::vector<DecompositionMode> all_modes();

enum class ValidationPolicy { MaeGate, None };

std::string to_string(ValidationPolicy policy);
/// Accepts "mae" and "none".
ValidationPolicy parse_validation(std::string_view text);

enum class Stage { Task, Loss, Gradient, Optimizer, Diagnostic };

std::string to_string(Stage stage);
Stage parse_stage(std::string_view text);

struct Temperatures {
  double task = 1.0;
  double loss = 0.3;
  double gradient = 0.3;
  double optimizer = 0.7;
  double diagnostic = 0.0;

  double for_stage(Stage stage) const;
};

struct RunConfig {
  DecompositionMode mode = DecompositionMode::single_task();
  ValidationPolicy validation = ValidationPolicy::MaeGate;
  int steps = 12;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  int minibatch_size = 8;
  Temperatures temperatures;
  int max_parse_retries = 3;
  int gradient_paragraph_limit = 3;
  int parallelism = 4;
  /// Pool gate-rejected candidates into the cherry-pick selection as well.
  bool cherry_pick_include_rejected = false;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

struct CriterionMetrics {
  std::string criterion;
  std::optional<double> rho;  // nullopt when the correlation is undefined
  double mae = 0.0;
  double off_by_one = 0.0;

  bool operator==(const CriterionMetrics&) const = default;
};

/// Metrics of one prompt on one sample set, in criterion order.
struct MetricVector {
  std::vector<CriterionMetrics> per_criterion;
  int imputed = 0;

  /// Throws ConfigError when the criterion is not part of the vector.
  const CriterionMetrics& at(std::string_view criterion) const;

  /// Mean of the defined per-criterion correlations; nullopt when none is defined.
  std::optional<double> task_averaged_rho() const;
  double task_averaged_mae() const;

  bool operator==(const MetricVector&) const = default;
};

}  // namespace mograd
