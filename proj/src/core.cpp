#include "mograd/core.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

namespace mograd {

std::vector<Criterion> default_criteria() {
  return {{"fluency", 1, 5}, {"relevance", 1, 5}, {"coherence", 1, 5}, {"consistency", 1, 5}};
}

const Criterion& find_criterion(const std::vector<Criterion>& criteria, std::string_view id) {
  auto it = std::find_if(criteria.begin(), criteria.end(),
                         [&](const Criterion& c) { return c.id == id; });
  if (it == criteria.end()) {
    throw ConfigError(fmt::format("unknown criterion '{}'", id));
  }
  return *it;
}

std::vector<std::string> criterion_ids(const std::vector<Criterion>& criteria) {
  std::vector<std::string> ids;
  ids.reserve(criteria.size());
  for (const auto& c : criteria) ids.push_back(c.id);
  return ids;
}

DecompositionMode DecompositionMode::single_task() {
  return {true, StageMode::Separate, StageMode::Separate, StageMode::Separate};
}

DecompositionMode DecompositionMode::triple(StageMode loss, StageMode gradient,
                                            StageMode optimizer) {
  using enum StageMode;
  const bool defined = (loss == Separate && gradient == Separate) ||
                       (loss == Separate && gradient == Combined && optimizer == Combined) ||
                       (loss == Combined && gradient == Combined && optimizer == Combined);
  if (!defined) {
    auto letter = [](StageMode m) { return m == Separate ? 's' : 'c'; };
    throw InvalidModeError(fmt::format("decomposition code '{}{}{}' is not one of sss, ssc, scc, ccc",
                                       letter(loss), letter(gradient), letter(optimizer)));
  }
  return {false, loss, gradient, optimizer};
}

std::string DecompositionMode::code() const {
  if (single_) return "single";
  auto letter = [](StageMode m) { return m == StageMode::Separate ? 's' : 'c'; };
  return {letter(loss_), letter(gradient_), letter(optimizer_)};
}

DecompositionMode parse_mode(std::string_view code) {
  std::string lower(code);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  using enum StageMode;
  if (lower == "single") return DecompositionMode::single_task();
  if (lower == "sss") return DecompositionMode::triple(Separate, Separate, Separate);
  if (lower == "ssc") return DecompositionMode::triple(Separate, Separate, Combined);
  if (lower == "scc") return DecompositionMode::triple(Separate, Combined, Combined);
  if (lower == "ccc") return DecompositionMode::triple(Combined, Combined, Combined);
  throw InvalidModeError(fmt::format("invalid decomposition mode '{}'", code));
}

std::vector<DecompositionMode> all_modes() {
  return {parse_mode("single"), parse_mode("sss"), parse_mode("ssc"), parse_mode("scc"),
          parse_mode("ccc")};
}

std::string to_string(ValidationPolicy policy) {
  return policy == ValidationPolicy::MaeGate ? "mae" : "none";
}

ValidationPolicy parse_validation(std::string_view text) {
  if (text == "mae") return ValidationPolicy::MaeGate;
  if (text == "none") return ValidationPolicy::None;
  throw ConfigError(fmt::format("invalid validation policy '{}' (expected mae or none)", text));
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Task: return "task";
    case Stage::Loss: return "loss";
    case Stage::Gradient: return "gradient";
    case Stage::Optimizer: return "optimizer";
    case Stage::Diagnostic: return "diagnostic";
  }
  return "unknown";
}

Stage parse_stage(std::string_view text) {
  for (Stage s : {Stage::Task, Stage::Loss, Stage::Gradient, Stage::Optimizer, Stage::Diagnostic}) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError(fmt::format("unknown stage tag '{}'", text));
}

double Temperatures::for_stage(Stage stage) const {
  switch (stage) {
    case Stage::Task: return task;
    case Stage::Loss: return loss;
    case Stage::Gradient: return gradient;
    case Stage::Optimizer: return optimizer;
    case Stage::Diagnostic: return diagnostic;
  }
  return task;
}

void RunConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (minibatch_size < 1) throw ConfigError("minibatch_size must be >= 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (max_parse_retries < 0) throw ConfigError("max_parse_retries must be >= 0");
  if (gradient_paragraph_limit < 1) throw ConfigError("gradient_paragraph_limit must be >= 1");
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  for (double t : {temperatures.task, temperatures.loss, temperatures.gradient,
                   temperatures.optimizer, temperatures.diagnostic}) {
    if (!(t >= 0.0)) throw ConfigError("temperatures must be >= 0");
  }
}

const CriterionMetrics& MetricVector::at(std::string_view criterion) const {
  for (const auto& m : per_criterion) {
    if (m.criterion == criterion) return m;
  }
  throw ConfigError(fmt::format("metric vector has no criterion '{}'", criterion));
}

std::optional<double> MetricVector::task_averaged_rho() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& m : per_criterion) {
    if (m.rho) {
      sum += *m.rho;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

double MetricVector::task_averaged_mae() const {
  if (per_criterion.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& m : per_criterion) sum += m.mae;
  return sum / static_cast<double>(per_criterion.size());
}

}  // namespace mograd
