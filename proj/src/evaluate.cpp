#include "mograd/evaluate.hpp"

#include <spdlog/spdlog.h>

#include "mograd/metrics.hpp"
#include "mograd/parallel.hpp"

namespace mograd {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string prompt_scope(const JudgePrompt& prompt) {
  return prompt.criteria().size() == 1 ? prompt.criteria().front().id : std::string(kAllScope);
}

}  // namespace

std::uint64_t request_seed(std::uint64_t run_seed, std::initializer_list<std::uint64_t> salts) {
  std::uint64_t h = splitmix(run_seed);
  for (auto s : salts) h = splitmix(h ^ s);
  return h & 0x7fffffffULL;
}

ChatResponse call_backend(ChatBackend& backend, const ChatRequest& request,
                          std::vector<CallRecord>* calls) {
  ChatResponse resp = backend.chat(request);
  if (calls) {
    calls->push_back({request.stage, request.scope, fingerprint(request), request.temperature,
                      request.seed, resp.backend_id, resp.usage});
  }
  return resp;
}

void append_calls(std::vector<CallRecord>* dst, std::vector<CallRecord>&& src) {
  if (!dst) return;
  dst->insert(dst->end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
}

std::vector<Prediction> predict_scores(const JudgePrompt& prompt, std::span<const Sample> batch,
                                       ChatBackend& backend, const RunConfig& config,
                                       const CallContext& ctx) {
  if (batch.empty()) throw PreconditionError("predict_scores: empty batch");
  const std::string scope = prompt_scope(prompt);
  std::vector<Prediction> out(batch.size());
  std::vector<std::vector<CallRecord>> calls(batch.size());

  parallel_for(batch.size(), config.parallelism, [&](std::size_t i) {
    const Sample& sample = batch[i];
    const std::string text = render_prompt(prompt, sample);
    const int attempts = 1 + config.max_parse_retries;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      // Seed depends only on (run seed, attempt) so an unchanged prompt on the
      // same sample issues the same request and reuses fixtures.
      const auto req = make_request(text, Stage::Task, scope, config.temperatures.task,
                                    request_seed(ctx.seed, {0x7a5c, static_cast<std::uint64_t>(attempt)}));
      const auto resp = call_backend(backend, req, &calls[i]);
      try {
        Prediction p = parse_prediction(resp.text, prompt.criteria());
        p.sample_id = sample.id;
        p.parse_attempts = attempt + 1;
        out[i] = std::move(p);
        return;
      } catch (const ParseError& e) {
        spdlog::debug("sample {}: unparseable judge output (attempt {}): {}", sample.id, attempt + 1,
                      e.what());
      }
    }
    Prediction p;
    p.sample_id = sample.id;
    p.parse_attempts = attempts;
    p.imputed = true;
    for (const auto& c : prompt.criteria()) p.scores[c.id] = c.midpoint();
    spdlog::warn("sample {}: no parseable judge output after {} attempts; imputing midpoints",
                 sample.id, attempts);
    out[i] = std::move(p);
  });

  for (auto& c : calls) append_calls(ctx.calls, std::move(c));
  return out;
}

MetricVector compute_metrics(std::span<const Prediction> predictions, std::span<const Sample> samples,
                             const std::vector<Criterion>& criteria) {
  if (predictions.size() != samples.size()) {
    throw DimensionMismatch("compute_metrics: predictions and samples differ in length");
  }
  if (samples.empty()) throw PreconditionError("compute_metrics: no samples");
  MetricVector mv;
  for (const auto& p : predictions) mv.imputed += p.imputed ? 1 : 0;
  for (const auto& c : criteria) {
    std::vector<double> pred, truth;
    pred.reserve(samples.size());
    truth.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      pred.push_back(predictions[i].scores.at(c.id));
      truth.push_back(samples[i].truth.at(c.id));
    }
    CriterionMetrics m;
    m.criterion = c.id;
    if (samples.size() >= 2) {
      try {
        m.rho = spearman_rho(pred, truth);
      } catch (const UndefinedCorrelation&) {
        spdlog::warn("Spearman correlation undefined for '{}' (constant series)", c.id);
      }
    }
    m.mae = mae(pred, truth);
    m.off_by_one = off_by_one_accuracy(pred, truth);
    mv.per_criterion.push_back(std::move(m));
  }
  return mv;
}

MetricVector evaluate_prompt(const JudgePrompt& prompt, std::span<const Sample> samples,
                             ChatBackend& backend, const RunConfig& config, const CallContext& ctx) {
  if (samples.empty()) throw PreconditionError("evaluate_prompt: no samples");
  const auto predictions = predict_scores(prompt, samples, backend, config, ctx);
  return compute_metrics(predictions, samples, prompt.criteria());
}

}  // namespace mograd
