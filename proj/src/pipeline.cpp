#include "mograd/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mograd/parallel.hpp"
#include "mograd/template.hpp"

namespace mograd {

namespace {

// Salts separating the request-seed streams of the stages.
enum : std::uint64_t {
  kSaltLoss = 0x1055,
  kSaltGradient = 0x64ad,
  kSaltOptimizer = 0x0971,
  kSaltMinibatch = 0xb47c,
};

StageMode loss_stage(const DecompositionMode& m) {
  return m.is_single_task() ? StageMode::Separate : m.loss();
}
StageMode gradient_stage(const DecompositionMode& m) {
  return m.is_single_task() ? StageMode::Separate : m.gradient();
}
StageMode optimizer_stage(const DecompositionMode& m) {
  return m.is_single_task() ? StageMode::Separate : m.optimizer();
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string join_ids(const std::vector<Criterion>& criteria) {
  std::string out;
  for (const auto& c : criteria) {
    if (!out.empty()) out += ", ";
    out += c.id;
  }
  return out;
}

std::string format_truth(double v) { return fmt::format("{:.2f}", v); }

std::string score_line(const Criterion& c, const Prediction& p, const Sample& s) {
  return fmt::format("- {}: judge {}, human {}", c.id, p.scores.at(c.id), format_truth(s.truth.at(c.id)));
}

std::vector<std::string> split_paragraphs(std::string_view text) {
  std::vector<std::string> paragraphs;
  std::string current;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) {
      if (!current.empty()) paragraphs.push_back(std::move(current));
      current.clear();
    } else {
      if (!current.empty()) current += '\n';
      current += line;
    }
  }
  if (!current.empty()) paragraphs.push_back(std::move(current));
  return paragraphs;
}

ChatRequest stage_request(std::string content, Stage stage, std::string scope, const RunConfig& config,
                          const CallContext& ctx, std::uint64_t salt, std::uint64_t index, int attempt) {
  return make_request(std::move(content), stage, std::move(scope), config.temperatures.for_stage(stage),
                      request_seed(ctx.seed, {salt, static_cast<std::uint64_t>(ctx.step), index,
                                              static_cast<std::uint64_t>(attempt)}));
}

void note(const CallContext& ctx, std::string text) {
  spdlog::warn("step {}: {}", ctx.step, text);
  if (ctx.notes) ctx.notes->push_back(std::move(text));
}

const TextualGradient& gradient_for(std::span<const TextualGradient> gradients, std::string_view scope) {
  for (const auto& g : gradients) {
    if (g.scope == scope) return g;
  }
  throw PreconditionError(fmt::format("no gradient with scope '{}'", scope));
}

std::optional<std::string> parse_separate_rewrite(const std::string& raw) {
  static const std::regex tag_re(R"re(<new_instruction>([\s\S]*?)</new_instruction>)re");
  std::smatch m;
  if (!std::regex_search(raw, m, tag_re)) return std::nullopt;
  std::string text = trim(m[1].str());
  if (text.empty()) return std::nullopt;
  return text;
}

std::optional<InstructionMap> parse_combined_rewrite(const std::string& raw,
                                                     const std::vector<Criterion>& criteria) {
  const auto object = find_first_json_object(raw);
  if (object.empty()) return std::nullopt;
  const auto json = nlohmann::json::parse(object);
  if (json.size() != criteria.size()) return std::nullopt;
  InstructionMap out;
  for (const auto& c : criteria) {
    auto it = json.find(c.id);
    if (it == json.end() || !it->is_string()) return std::nullopt;
    std::string text = trim(it->get<std::string>());
    if (text.empty()) return std::nullopt;
    out[c.id] = std::move(text);
  }
  return out;
}

std::vector<std::size_t> draw_minibatch(std::size_t n, int size, std::uint64_t seed, int step) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(request_seed(seed, {kSaltMinibatch, static_cast<std::uint64_t>(step)}));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min<std::size_t>(n, static_cast<std::size_t>(size)));
  return idx;
}

}  // namespace

std::string to_string(GateVerdict verdict) {
  switch (verdict) {
    case GateVerdict::Accepted: return "accepted";
    case GateVerdict::Rejected: return "rejected";
    case GateVerdict::NoGate: return "no_gate";
  }
  return "?";
}

GateVerdict parse_gate_verdict(std::string_view text) {
  if (text == "accepted") return GateVerdict::Accepted;
  if (text == "rejected") return GateVerdict::Rejected;
  if (text == "no_gate") return GateVerdict::NoGate;
  throw ParseError(fmt::format("unknown gate verdict '{}'", text));
}

int count_paragraphs(std::string_view text) { return static_cast<int>(split_paragraphs(text).size()); }

std::string truncate_paragraphs(std::string_view text, int limit) {
  auto paragraphs = split_paragraphs(text);
  if (static_cast<int>(paragraphs.size()) > limit) paragraphs.resize(static_cast<std::size_t>(limit));
  std::string out;
  for (const auto& p : paragraphs) {
    if (!out.empty()) out += "\n\n";
    out += p;
  }
  return out;
}

std::vector<TextualLoss> compute_losses(const DecompositionMode& mode, const JudgePrompt& prompt,
                                        std::span<const Sample> batch,
                                        std::span<const Prediction> predictions,
                                        ChatBackend& backend, const RunConfig& config,
                                        const CallContext& ctx, const PromptTemplates& templates) {
  if (batch.empty()) throw PreconditionError("compute_losses: empty batch");
  if (predictions.size() != batch.size()) {
    throw DimensionMismatch("compute_losses: predictions are not aligned to the batch");
  }
  const auto& criteria = prompt.criteria();
  const bool separate = loss_stage(mode) == StageMode::Separate;

  struct Job {
    std::size_t sample;
    const Criterion* criterion;  // null for a combined critique
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (predictions[i].sample_id != batch[i].id) {
      throw PreconditionError("compute_losses: predictions are not aligned to the batch");
    }
    if (separate) {
      for (const auto& c : criteria) jobs.push_back({i, &c});
    } else {
      jobs.push_back({i, nullptr});
    }
  }

  std::vector<TextualLoss> out(jobs.size());
  std::vector<std::vector<CallRecord>> calls(jobs.size());
  parallel_for(jobs.size(), config.parallelism, [&](std::size_t j) {
    const Sample& s = batch[jobs[j].sample];
    const Prediction& p = predictions[jobs[j].sample];
    std::string content;
    std::string scope;
    if (const Criterion* c = jobs[j].criterion) {
      scope = c->id;
      content = render_template(templates.loss_separate,
                                {{"criterion", c->id},
                                 {"scale_min", std::to_string(c->scale_min)},
                                 {"scale_max", std::to_string(c->scale_max)},
                                 {"instruction", prompt.instruction(c->id)},
                                 {"summary", s.summary_text},
                                 {"source", s.source_text},
                                 {"score_lines", score_line(*c, p, s)}});
    } else {
      scope = std::string(kAllScope);
      std::string lines;
      for (const auto& cc : criteria) {
        if (!lines.empty()) lines += '\n';
        lines += score_line(cc, p, s);
      }
      content = render_template(templates.loss_combined, {{"criteria", join_ids(criteria)},
                                                          {"instructions", format_instruction_lines(prompt)},
                                                          {"summary", s.summary_text},
                                                          {"source", s.source_text},
                                                          {"score_lines", lines}});
    }
    const auto resp = call_backend(
        backend, stage_request(content, Stage::Loss, scope, config, ctx, kSaltLoss, j, 0), &calls[j]);
    std::string critique = trim(resp.text);
    if (critique.empty()) throw ProtocolError(fmt::format("empty critique for sample {}", s.id));
    out[j] = {s.id, scope, std::move(critique)};
  });
  for (auto& c : calls) append_calls(ctx.calls, std::move(c));
  return out;
}

std::vector<TextualGradient> compute_gradients(const DecompositionMode& mode,
                                               std::span<const TextualLoss> losses,
                                               const JudgePrompt& prompt, ChatBackend& backend,
                                               const RunConfig& config, const CallContext& ctx,
                                               const PromptTemplates& templates) {
  if (losses.empty()) throw PreconditionError("compute_gradients: no losses");
  const auto& criteria = prompt.criteria();
  const bool separate = gradient_stage(mode) == StageMode::Separate;
  const std::string limit = std::to_string(config.gradient_paragraph_limit);

  auto critiques_of = [&](std::optional<std::string_view> scope) {
    std::string out;
    int n = 0;
    for (const auto& l : losses) {
      if (scope && l.scope != *scope) continue;
      if (!out.empty()) out += "\n\n";
      out += fmt::format("### Critique {} (sample {}, {})\n{}", ++n, l.sample_id, l.scope, l.critique);
    }
    return out;
  };

  std::vector<std::pair<std::string, std::string>> jobs;  // (scope, request text)
  if (separate) {
    for (const auto& c : criteria) {
      const std::string critiques = critiques_of(c.id);
      if (critiques.empty()) {
        throw PreconditionError(fmt::format("compute_gradients: no losses for '{}'", c.id));
      }
      jobs.emplace_back(c.id, render_template(templates.gradient_separate,
                                              {{"criterion", c.id},
                                               {"scale_min", std::to_string(c.scale_min)},
                                               {"scale_max", std::to_string(c.scale_max)},
                                               {"instruction", prompt.instruction(c.id)},
                                               {"critiques", critiques},
                                               {"paragraph_limit", limit}}));
    }
  } else {
    jobs.emplace_back(std::string(kAllScope),
                      render_template(templates.gradient_combined,
                                      {{"criteria", join_ids(criteria)},
                                       {"instructions", format_instruction_lines(prompt)},
                                       {"critiques", critiques_of(std::nullopt)},
                                       {"paragraph_limit", limit}}));
  }

  std::vector<TextualGradient> out(jobs.size());
  std::vector<std::vector<CallRecord>> calls(jobs.size());
  std::vector<std::vector<std::string>> notes(jobs.size());
  parallel_for(jobs.size(), config.parallelism, [&](std::size_t j) {
    const auto& [scope, content] = jobs[j];
    std::string text;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const auto resp = call_backend(
          backend, stage_request(content, Stage::Gradient, scope, config, ctx, kSaltGradient, j, attempt),
          &calls[j]);
      text = trim(resp.text);
      if (count_paragraphs(text) <= config.gradient_paragraph_limit) break;
      if (attempt == 1) {
        notes[j].push_back(fmt::format("gradient for '{}' had {} paragraphs after regeneration; truncated to {}",
                                       scope, count_paragraphs(text), config.gradient_paragraph_limit));
        text = truncate_paragraphs(text, config.gradient_paragraph_limit);
      }
    }
    if (text.empty()) throw ProtocolError(fmt::format("empty gradient for '{}'", scope));
    out[j] = {scope, text, count_paragraphs(text)};
  });
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    append_calls(ctx.calls, std::move(calls[j]));
    for (auto& n : notes[j]) note(ctx, std::move(n));
  }
  return out;
}

JudgePrompt apply_optimizer(const DecompositionMode& mode, const JudgePrompt& prompt,
                            std::span<const TextualGradient> gradients, ChatBackend& backend,
                            const RunConfig& config, const CallContext& ctx,
                            const PromptTemplates& templates) {
  if (gradients.empty()) throw PreconditionError("apply_optimizer: no gradients");
  const auto& criteria = prompt.criteria();
  InstructionMap revised;

  if (optimizer_stage(mode) == StageMode::Separate) {
    std::vector<std::string> results(criteria.size());
    std::vector<std::vector<CallRecord>> calls(criteria.size());
    parallel_for(criteria.size(), config.parallelism, [&](std::size_t k) {
      const Criterion& c = criteria[k];
      const std::string content =
          render_template(templates.optimizer_separate, {{"criterion", c.id},
                                                         {"scale_min", std::to_string(c.scale_min)},
                                                         {"scale_max", std::to_string(c.scale_max)},
                                                         {"instruction", prompt.instruction(c.id)},
                                                         {"feedback", gradient_for(gradients, c.id).text}});
      std::string raw;
      for (int attempt = 0; attempt < 2; ++attempt) {
        raw = call_backend(backend,
                           stage_request(content, Stage::Optimizer, c.id, config, ctx, kSaltOptimizer, k, attempt),
                           &calls[k])
                  .text;
        if (auto text = parse_separate_rewrite(raw)) {
          results[k] = std::move(*text);
          return;
        }
      }
      throw OptimizerOutputError(fmt::format("optimizer output for '{}' has no usable new instruction", c.id),
                                 raw);
    });
    for (auto& c : calls) append_calls(ctx.calls, std::move(c));
    for (std::size_t k = 0; k < criteria.size(); ++k) revised[criteria[k].id] = std::move(results[k]);
  } else {
    std::string feedback;
    for (const auto& g : gradients) {
      if (!feedback.empty()) feedback += "\n\n";
      feedback += fmt::format("### Feedback for {}\n{}", g.scope, g.text);
    }
    nlohmann::ordered_json current = nlohmann::ordered_json::object();
    for (const auto& c : criteria) current[c.id] = prompt.instruction(c.id);
    const std::string content = render_template(
        templates.optimizer_combined,
        {{"criteria", join_ids(criteria)}, {"instructions_json", current.dump(2)}, {"feedback", feedback}});
    std::string raw;
    std::optional<InstructionMap> parsed;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
      raw = call_backend(backend,
                         stage_request(content, Stage::Optimizer, std::string(kAllScope), config, ctx,
                                       kSaltOptimizer, 0, attempt),
                         ctx.calls)
                .text;
      parsed = parse_combined_rewrite(raw, criteria);
    }
    if (!parsed) {
      throw OptimizerOutputError("combined optimizer output does not map onto the instructions", raw);
    }
    revised = std::move(*parsed);
  }

  JudgePrompt candidate = prompt.with_instructions(std::move(revised));
  if (candidate.skeleton_fingerprint() != prompt.skeleton_fingerprint()) {
    throw Error("optimizer changed the frozen prompt skeleton");
  }
  return candidate;
}

GateResult validation_gate(ValidationPolicy policy, const JudgePrompt& candidate,
                           const MetricVector& incumbent_val, std::span<const Sample> val_samples,
                           ChatBackend& backend, const RunConfig& config, const CallContext& ctx) {
  GateResult result;
  if (policy == ValidationPolicy::None) return result;
  if (val_samples.empty()) throw PreconditionError("validation gate needs validation samples");
  result.incumbent_mae = incumbent_val.task_averaged_mae();
  try {
    result.candidate_val = evaluate_prompt(candidate, val_samples, backend, config, ctx);
  } catch (const TransportError& e) {
    result.accepted = false;
    result.verdict = GateVerdict::Rejected;
    result.cause = fmt::format("validation evaluation failed: {}", e.what());
    note(ctx, result.cause);
    return result;
  }
  result.candidate_mae = result.candidate_val->task_averaged_mae();
  result.accepted = *result.candidate_mae <= *result.incumbent_mae;
  result.verdict = result.accepted ? GateVerdict::Accepted : GateVerdict::Rejected;
  return result;
}

GateResult validation_gate(ValidationPolicy policy, const JudgePrompt& candidate,
                           const JudgePrompt& incumbent, std::span<const Sample> val_samples,
                           ChatBackend& backend, const RunConfig& config, const CallContext& ctx) {
  if (policy == ValidationPolicy::None) return {};
  if (val_samples.empty()) throw PreconditionError("validation gate needs validation samples");
  const MetricVector incumbent_val = evaluate_prompt(incumbent, val_samples, backend, config, ctx);
  return validation_gate(policy, candidate, incumbent_val, val_samples, backend, config, ctx);
}

std::optional<int> SeedRun::best_step() const {
  std::optional<int> best;
  std::optional<double> best_value;
  for (const auto& s : trajectory) {
    if (s.task_rho && (!best_value || *s.task_rho > *best_value)) {
      best_value = s.task_rho;
      best = s.step;
    }
  }
  return best;
}

std::optional<double> SeedRun::initial_rho() const {
  if (trajectory.empty()) return std::nullopt;
  return trajectory.front().task_rho;
}

std::optional<double> SeedRun::best_rho() const {
  const auto step = best_step();
  if (!step) return std::nullopt;
  return trajectory[static_cast<std::size_t>(*step)].task_rho;
}

std::optional<double> SeedRun::final_hypervolume() const {
  if (trajectory.empty()) return std::nullopt;
  return trajectory.back().hypervolume;
}

std::vector<std::vector<Criterion>> lanes_for(const DecompositionMode& mode,
                                              const std::vector<Criterion>& criteria) {
  if (!mode.is_single_task()) return {criteria};
  std::vector<std::vector<Criterion>> lanes;
  for (const auto& c : criteria) lanes.push_back({c});
  return lanes;
}

std::string lane_scope(const std::vector<Criterion>& lane) {
  return lane.size() == 1 ? lane.front().id : std::string(kAllScope);
}

std::vector<double> rho_vector(const std::vector<CriterionMetrics>& metrics) {
  std::vector<double> v;
  v.reserve(metrics.size());
  for (const auto& m : metrics) v.push_back(m.rho.value_or(-1.0));
  return v;
}

namespace {

// Walks the steps of a run, calling `visit(step, incumbents, point)` where
// `point` is the archive point contributed by the step (if any).
template <typename Visit>
void walk_steps(const SeedRun& run, Visit&& visit) {
  const std::size_t nl = run.lanes.size();
  std::map<std::pair<int, std::string>, const CandidateRecord*> by_cell;
  for (const auto& c : run.candidates) by_cell[{c.step, c.scope}] = &c;
  std::vector<const CandidateRecord*> incumbents(nl, nullptr);

  auto ordered = [&](const std::vector<const CandidateRecord*>& parts) {
    std::vector<CriterionMetrics> out;
    for (const auto& c : run.criteria) {
      for (const auto* p : parts) {
        if (!p) continue;
        for (const auto& m : p->test_metrics.per_criterion) {
          if (m.criterion == c.id) out.push_back(m);
        }
      }
    }
    return out;
  };

  for (int s = 0; s <= run.completed_steps; ++s) {
    std::vector<const CandidateRecord*> at_step(nl, nullptr);
    bool any = false;
    for (std::size_t k = 0; k < nl; ++k) {
      auto it = by_cell.find({s, run.lanes[k]});
      if (it == by_cell.end()) continue;
      at_step[k] = it->second;
      any = true;
    }
    std::optional<std::vector<CriterionMetrics>> point;
    if (any) {
      std::vector<const CandidateRecord*> parts(nl);
      for (std::size_t k = 0; k < nl; ++k) parts[k] = at_step[k] ? at_step[k] : incumbents[k];
      point = ordered(parts);
    }
    for (std::size_t k = 0; k < nl; ++k) {
      if (at_step[k] && (s == 0 || at_step[k]->accepted)) incumbents[k] = at_step[k];
    }
    visit(s, incumbents, ordered(incumbents), point);
  }
}

}  // namespace

void build_trajectory(SeedRun& run) {
  run.trajectory.clear();
  ParetoArchive archive(run.criteria.size());
  walk_steps(run, [&](int s, const std::vector<const CandidateRecord*>& incumbents,
                      const std::vector<CriterionMetrics>& incumbent_metrics,
                      const std::optional<std::vector<CriterionMetrics>>& point) {
    if (point) archive.insert(fmt::format("seed{}:step{}", run.seed, s), rho_vector(*point));
    StepSnapshot snap;
    snap.step = s;
    snap.incumbent_test = incumbent_metrics;
    MetricVector mv{incumbent_metrics, 0};
    snap.task_rho = mv.task_averaged_rho();
    double mae_sum = 0.0;
    bool all_val = !incumbents.empty();
    for (const auto* inc : incumbents) {
      if (!inc || !inc->val_metrics) {
        all_val = false;
        break;
      }
      mae_sum += inc->val_metrics->task_averaged_mae();
    }
    if (all_val) snap.incumbent_val_mae = mae_sum / static_cast<double>(incumbents.size());
    snap.hypervolume = archive.hypervolume();
    run.trajectory.push_back(std::move(snap));
  });
}

ParetoArchive build_archive(const SeedRun& run) {
  ParetoArchive archive(run.criteria.size());
  walk_steps(run, [&](int s, const auto&, const auto&, const std::optional<std::vector<CriterionMetrics>>& point) {
    if (point) archive.insert(fmt::format("seed{}:step{}", run.seed, s), rho_vector(*point));
  });
  return archive;
}

namespace {

struct Lane {
  std::vector<Criterion> criteria;
  std::string scope;
  DecompositionMode mode;
  JudgePrompt incumbent;
  std::optional<MetricVector> incumbent_val;
};

std::map<Stage, int> count_calls(const std::vector<CallRecord>& calls) {
  std::map<Stage, int> counts;
  for (const auto& c : calls) ++counts[c.stage];
  return counts;
}

}  // namespace

SeedRun run_seed(const RunConfig& config, const DatasetSplit& data, ChatBackend& backend,
                 std::uint64_t seed, const PipelineOptions& options) {
  config.validate();
  if (data.train.empty()) throw PreconditionError("dataset split has no training samples");
  if (data.test.empty()) throw PreconditionError("dataset split has no test samples");
  if (config.validation == ValidationPolicy::MaeGate && data.validation.empty()) {
    throw PreconditionError("the MAE gate needs a non-empty validation set");
  }
  const PromptTemplates& templates = options.templates ? *options.templates : PromptTemplates::builtin();
  RunSink null_sink;
  RunSink& sink = options.sink ? *options.sink : null_sink;
  const bool gated = config.validation == ValidationPolicy::MaeGate;

  SeedRun run;
  run.mode = config.mode;
  run.validation = config.validation;
  run.seed = seed;
  run.criteria = data.criteria;

  std::vector<Lane> lanes;
  std::vector<JudgePrompt> initial_prompts;
  for (auto& lc : lanes_for(config.mode, data.criteria)) {
    const auto lane_mode = config.mode.is_single_task()
                               ? DecompositionMode::triple(StageMode::Separate, StageMode::Separate,
                                                           StageMode::Separate)
                               : config.mode;
    auto prompt = JudgePrompt::initial(lc);
    initial_prompts.push_back(prompt);
    run.lanes.push_back(lane_scope(lc));
    lanes.push_back({lc, lane_scope(lc), lane_mode, std::move(prompt), std::nullopt});
  }
  sink.run_started(run, config, initial_prompts);

  int step = 0;
  std::string scope;
  std::vector<CallRecord> calls;
  auto flush_calls = [&] {
    if (!calls.empty()) sink.llm_calls(step, calls);
    calls.clear();
  };

  try {
    for (auto& lane : lanes) {
      scope = lane.scope;
      sink.step_started(0, scope, {});
      const CallContext ctx{seed, 0, &calls, nullptr};
      if (gated) lane.incumbent_val = evaluate_prompt(lane.incumbent, data.validation, backend, config, ctx);
      MetricVector test = evaluate_prompt(lane.incumbent, data.test, backend, config, ctx);
      flush_calls();
      CandidateRecord rec{0, seed, scope, lane.incumbent, lane.incumbent_val, std::move(test), true};
      sink.candidate_evaluated(rec);
      run.candidates.push_back(std::move(rec));
    }
    run.completed_steps = 0;

    for (step = 1; step <= config.steps; ++step) {
      const auto picks = draw_minibatch(data.train.size(), config.minibatch_size, seed, step);
      std::vector<Sample> batch;
      std::vector<std::string> batch_ids;
      for (auto i : picks) {
        batch.push_back(data.train[i]);
        batch_ids.push_back(data.train[i].id);
      }

      for (auto& lane : lanes) {
        scope = lane.scope;
        StepTrace trace;
        trace.step = step;
        trace.scope = scope;
        trace.minibatch_ids = batch_ids;
        trace.old_instructions = lane.incumbent.instructions();
        trace.new_instructions = trace.old_instructions;
        sink.step_started(step, scope, batch_ids);
        const CallContext ctx{seed, step, &calls, &trace.notes};

        const auto predictions = predict_scores(lane.incumbent, batch, backend, config, ctx);
        trace.losses = compute_losses(lane.mode, lane.incumbent, batch, predictions, backend, config, ctx, templates);
        trace.gradients = compute_gradients(lane.mode, trace.losses, lane.incumbent, backend, config, ctx, templates);

        std::optional<JudgePrompt> candidate;
        try {
          candidate = apply_optimizer(lane.mode, lane.incumbent, trace.gradients, backend, config, ctx, templates);
        } catch (const OptimizerOutputError& e) {
          trace.verdict = GateVerdict::Rejected;
          note(ctx, fmt::format("{}; step rejected; raw output: {}", e.what(), e.raw_output()));
        }

        if (candidate) {
          trace.new_instructions = candidate->instructions();
          const GateResult gate =
              gated ? validation_gate(config.validation, *candidate, *lane.incumbent_val, data.validation,
                                      backend, config, ctx)
                    : GateResult{};
          MetricVector test = evaluate_prompt(*candidate, data.test, backend, config, ctx);
          trace.call_counts = count_calls(calls);
          flush_calls();
          CandidateRecord rec{step, seed, scope, *candidate, gate.candidate_val, std::move(test), gate.accepted};
          sink.candidate_evaluated(rec);
          sink.gate_decision(step, scope, gate);
          run.candidates.push_back(std::move(rec));
          trace.verdict = gate.verdict;
          trace.candidate_val_mae = gate.candidate_mae;
          if (gate.accepted) {
            lane.incumbent = *candidate;
            if (gate.candidate_val) lane.incumbent_val = gate.candidate_val;
          }
        } else {
          trace.call_counts = count_calls(calls);
          flush_calls();
        }
        if (lane.incumbent_val) trace.incumbent_val_mae = lane.incumbent_val->task_averaged_mae();
        sink.step_completed(trace);
        run.traces.push_back(std::move(trace));
      }
      run.completed_steps = step;
    }
  } catch (const std::exception& e) {
    flush_calls();
    run.failed = true;
    run.failed_step = step;
    run.error = e.what();
    spdlog::error("seed {} failed at step {} ({}): {}", seed, step, scope, e.what());
    sink.run_error(step, scope, e.what());
  }

  build_trajectory(run);
  sink.run_completed(run);
  return run;
}

RunResult run_optimization(const RunConfig& config, const DatasetSplit& data, ChatBackend& backend,
                           const PipelineOptions& options) {
  config.validate();
  RunResult result;
  result.config = config;
  for (auto seed : config.seeds) result.runs.push_back(run_seed(config, data, backend, seed, options));
  return result;
}

}  // namespace mograd
