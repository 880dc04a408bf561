#pragma once
// Forward pass of the judge over a sample set and the resulting metric vector.

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mograd/backend.hpp"
#include "mograd/core.hpp"
#include "mograd/prompt.hpp"

namespace mograd {

/// One backend call as it appears in the run log.
struct CallRecord {
  Stage stage = Stage::Task;
  std::string scope;
  std::string fingerprint;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  std::string backend_id;
  Usage usage;
};

/// Per-stage bookkeeping threaded through the stage functions. Every field is
/// optional; the default context records nothing.
struct CallContext {
  std::uint64_t seed = 0;  // run seed, folded into every request seed
  int step = 0;
  std::vector<CallRecord>* calls = nullptr;
  std::vector<std::string>* notes = nullptr;
};

/// Deterministic request seed for (run seed, salts...). Kept to 31 bits so every
/// upstream accepts it.
std::uint64_t request_seed(std::uint64_t run_seed, std::initializer_list<std::uint64_t> salts);

/// Issues a request and returns the response, appending a CallRecord to
/// `calls` when given.
ChatResponse call_backend(ChatBackend& backend, const ChatRequest& request,
                          std::vector<CallRecord>* calls);

/// Appends `src` to `*dst` (no-op when dst is null).
void append_calls(std::vector<CallRecord>* dst, std::vector<CallRecord>&& src);

/// One Prediction per sample, in batch order. A response that does not parse
/// is resampled up to config.max_parse_retries times; after that every
/// criterion gets the scale midpoint and the prediction is flagged imputed.
/// Task requests are scoped to the criterion for one-criterion prompts, "all" otherwise.
std::vector<Prediction> predict_scores(const JudgePrompt& prompt, std::span<const Sample> batch,
                                       ChatBackend& backend, const RunConfig& config,
                                       const CallContext& ctx = {});

/// Spearman, MAE and off-by-one per criterion of `criteria`. Undefined
/// correlations are stored as nullopt and logged.
MetricVector compute_metrics(std::span<const Prediction> predictions, std::span<const Sample> samples,
                             const std::vector<Criterion>& criteria);

/// predict_scores followed by compute_metrics over the prompt's criteria.
MetricVector evaluate_prompt(const JudgePrompt& prompt, std::span<const Sample> samples,
                             ChatBackend& backend, const RunConfig& config,
                             const CallContext& ctx = {});

}  // namespace mograd
