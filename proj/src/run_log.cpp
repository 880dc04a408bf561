#include "mograd/run_log.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include <fmt/chrono.h>
#include <fmt/format.h>

namespace mograd {

using nlohmann::json;

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)), ms);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

json criteria_json(const std::vector<Criterion>& criteria) {
  json arr = json::array();
  for (const auto& c : criteria) arr.push_back({{"id", c.id}, {"scale_min", c.scale_min}, {"scale_max", c.scale_max}});
  return arr;
}

std::vector<Criterion> criteria_from_json(const json& arr) {
  std::vector<Criterion> out;
  for (const auto& c : arr) out.push_back({c.at("id"), c.at("scale_min"), c.at("scale_max")});
  return out;
}

json instructions_json(const InstructionMap& m) { return json(m); }

json trace_json(const StepTrace& t) {
  json losses = json::array();
  for (const auto& l : t.losses) losses.push_back({{"sample_id", l.sample_id}, {"scope", l.scope}, {"critique", l.critique}});
  json gradients = json::array();
  for (const auto& g : t.gradients) {
    gradients.push_back({{"scope", g.scope}, {"text", g.text}, {"paragraph_count", g.paragraph_count}});
  }
  json counts = json::object();
  for (const auto& [stage, n] : t.call_counts) counts[to_string(stage)] = n;
  return {{"step", t.step},
          {"scope", t.scope},
          {"minibatch_ids", t.minibatch_ids},
          {"losses", losses},
          {"gradients", gradients},
          {"old_instructions", instructions_json(t.old_instructions)},
          {"new_instructions", instructions_json(t.new_instructions)},
          {"verdict", to_string(t.verdict)},
          {"call_counts", counts},
          {"candidate_val_mae", opt(t.candidate_val_mae)},
          {"incumbent_val_mae", opt(t.incumbent_val_mae)},
          {"notes", t.notes}};
}

StepTrace trace_from_json(const json& j) {
  StepTrace t;
  t.step = j.at("step");
  t.scope = j.at("scope");
  t.minibatch_ids = j.at("minibatch_ids").get<std::vector<std::string>>();
  for (const auto& l : j.at("losses")) t.losses.push_back({l.at("sample_id"), l.at("scope"), l.at("critique")});
  for (const auto& g : j.at("gradients")) t.gradients.push_back({g.at("scope"), g.at("text"), g.at("paragraph_count")});
  t.old_instructions = j.at("old_instructions").get<InstructionMap>();
  t.new_instructions = j.at("new_instructions").get<InstructionMap>();
  t.verdict = parse_gate_verdict(j.at("verdict").get<std::string>());
  for (const auto& [stage, n] : j.at("call_counts").items()) t.call_counts[parse_stage(stage)] = n.get<int>();
  t.candidate_val_mae = opt_double(j, "candidate_val_mae");
  t.incumbent_val_mae = opt_double(j, "incumbent_val_mae");
  t.notes = j.at("notes").get<std::vector<std::string>>();
  return t;
}

}  // namespace

std::string run_log_name(const DecompositionMode& mode, ValidationPolicy validation, std::uint64_t seed) {
  return fmt::format("run_{}_{}_seed{}.jsonl", mode.code(), to_string(validation), seed);
}

json to_json(const MetricVector& mv) {
  json per = json::array();
  for (const auto& m : mv.per_criterion) {
    per.push_back({{"criterion", m.criterion}, {"rho", opt(m.rho)}, {"mae", m.mae}, {"off_by_one", m.off_by_one}});
  }
  return {{"per_criterion", per}, {"imputed", mv.imputed}};
}

MetricVector metric_vector_from_json(const json& j) {
  MetricVector mv;
  mv.imputed = j.at("imputed");
  for (const auto& m : j.at("per_criterion")) {
    mv.per_criterion.push_back({m.at("criterion"), opt_double(m, "rho"), m.at("mae"), m.at("off_by_one")});
  }
  return mv;
}

json to_json(const RunConfig& c) {
  return {{"mode", c.mode.code()},
          {"validation", to_string(c.validation)},
          {"steps", c.steps},
          {"seeds", c.seeds},
          {"minibatch_size", c.minibatch_size},
          {"temperatures",
           {{"task", c.temperatures.task},
            {"loss", c.temperatures.loss},
            {"gradient", c.temperatures.gradient},
            {"optimizer", c.temperatures.optimizer},
            {"diagnostic", c.temperatures.diagnostic}}},
          {"max_parse_retries", c.max_parse_retries},
          {"gradient_paragraph_limit", c.gradient_paragraph_limit},
          {"parallelism", c.parallelism},
          {"cherry_pick_include_rejected", c.cherry_pick_include_rejected}};
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("validation")) c.validation = parse_validation(j.at("validation").get<std::string>());
  if (j.contains("steps")) c.steps = j.at("steps");
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("minibatch_size")) c.minibatch_size = j.at("minibatch_size");
  if (j.contains("temperatures")) {
    const auto& t = j.at("temperatures");
    c.temperatures.task = t.value("task", c.temperatures.task);
    c.temperatures.loss = t.value("loss", c.temperatures.loss);
    c.temperatures.gradient = t.value("gradient", c.temperatures.gradient);
    c.temperatures.optimizer = t.value("optimizer", c.temperatures.optimizer);
    c.temperatures.diagnostic = t.value("diagnostic", c.temperatures.diagnostic);
  }
  if (j.contains("max_parse_retries")) c.max_parse_retries = j.at("max_parse_retries");
  if (j.contains("gradient_paragraph_limit")) c.gradient_paragraph_limit = j.at("gradient_paragraph_limit");
  if (j.contains("parallelism")) c.parallelism = j.at("parallelism");
  if (j.contains("cherry_pick_include_rejected")) c.cherry_pick_include_rejected = j.at("cherry_pick_include_rejected");
  return c;
}

RunLogWriter::RunLogWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

void RunLogWriter::write(const std::string& event, json payload) {
  if (!out_.is_open()) throw Error("run log written before the run started");
  json record = {{"schema_version", kRunLogSchemaVersion}, {"ts", timestamp()}, {"event", event}};
  record.update(payload);
  out_ << record.dump() << '\n';
  out_.flush();
}

void RunLogWriter::run_started(const SeedRun& run, const RunConfig& config,
                               const std::vector<JudgePrompt>& initial_prompts) {
  if (out_.is_open()) out_.close();
  const auto path = dir_ / run_log_name(run.mode, run.validation, run.seed);
  out_.open(path, std::ios::trunc);
  if (!out_) throw Error(fmt::format("cannot write run log {}", path.string()));
  files_.push_back(path);

  json lanes = json::array();
  for (const auto& p : initial_prompts) {
    json skeleton = json::array();
    for (const auto& seg : p.skeleton_segments()) skeleton.push_back({{"name", seg.name}, {"text", seg.text}});
    lanes.push_back({{"scope", lane_scope(p.criteria())},
                     {"criteria", criterion_ids(p.criteria())},
                     {"skeleton", skeleton},
                     {"skeleton_fingerprint", p.skeleton_fingerprint()},
                     {"instructions", instructions_json(p.instructions())}});
  }
  write("RunStarted", {{"mode", run.mode.code()},
                       {"validation", to_string(run.validation)},
                       {"seed", run.seed},
                       {"criteria", criteria_json(run.criteria)},
                       {"config", to_json(config)},
                       {"lanes", lanes}});
}

void RunLogWriter::step_started(int step, const std::string& scope, const std::vector<std::string>& ids) {
  write("StepStarted", {{"step", step}, {"scope", scope}, {"minibatch_ids", ids}});
}

void RunLogWriter::llm_calls(int step, const std::vector<CallRecord>& calls) {
  for (const auto& c : calls) {
    write("LlmCall", {{"step", step},
                      {"stage", to_string(c.stage)},
                      {"scope", c.scope},
                      {"fingerprint", c.fingerprint},
                      {"temperature", c.temperature},
                      {"seed", c.seed ? json(*c.seed) : json(nullptr)},
                      {"backend_id", c.backend_id},
                      {"usage", {{"prompt_units", c.usage.prompt_units}, {"completion_units", c.usage.completion_units}}}});
  }
}

void RunLogWriter::candidate_evaluated(const CandidateRecord& c) {
  write("CandidateEvaluated", {{"step", c.step},
                               {"seed", c.seed},
                               {"scope", c.scope},
                               {"instructions", instructions_json(c.prompt.instructions())},
                               {"skeleton_fingerprint", c.prompt.skeleton_fingerprint()},
                               {"val_metrics", c.val_metrics ? to_json(*c.val_metrics) : json(nullptr)},
                               {"test_metrics", to_json(c.test_metrics)},
                               {"accepted", c.accepted}});
}

void RunLogWriter::gate_decision(int step, const std::string& scope, const GateResult& g) {
  write("GateDecision", {{"step", step},
                         {"scope", scope},
                         {"verdict", to_string(g.verdict)},
                         {"accepted", g.accepted},
                         {"candidate_val_mae", opt(g.candidate_mae)},
                         {"incumbent_val_mae", opt(g.incumbent_mae)},
                         {"cause", g.cause}});
}

void RunLogWriter::step_completed(const StepTrace& trace) {
  write("StepCompleted", {{"step", trace.step}, {"scope", trace.scope}, {"trace", trace_json(trace)}});
}

void RunLogWriter::run_error(int step, const std::string& scope, const std::string& message) {
  write("Error", {{"step", step}, {"scope", scope}, {"message", message}});
}

void RunLogWriter::run_completed(const SeedRun& run) {
  write("RunCompleted", {{"completed_steps", run.completed_steps},
                         {"failed", run.failed},
                         {"failed_step", run.failed_step ? json(*run.failed_step) : json(nullptr)},
                         {"best_step", run.best_step() ? json(*run.best_step()) : json(nullptr)},
                         {"initial_rho", opt(run.initial_rho())},
                         {"best_rho", opt(run.best_rho())},
                         {"final_hypervolume", opt(run.final_hypervolume())}});
  out_.close();
}

LoadedRun load_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(fmt::format("cannot open run log {}", path.string()));
  LoadedRun out;
  out.path = path;
  SeedRun& run = out.run;

  struct LaneInfo {
    std::vector<SkeletonSegment> skeleton;
    std::vector<Criterion> criteria;
    std::string fingerprint;
  };
  std::map<std::string, LaneInfo> lanes;
  std::map<std::string, int> open_step;  // scope -> step started but not completed
  std::map<std::string, int> last_completed;
  bool started = false;
  int line_no = 0;

  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      if (rec.at("schema_version").get<int>() != kRunLogSchemaVersion) {
        throw DatasetError("unsupported run-log schema version", line_no);
      }
      const std::string event = rec.at("event");
      if (out.completed) throw DatasetError("event after RunCompleted", line_no);
      if (!started && event != "RunStarted") throw DatasetError("first event must be RunStarted", line_no);

      if (event == "RunStarted") {
        if (started) throw DatasetError("duplicate RunStarted", line_no);
        started = true;
        run.mode = parse_mode(rec.at("mode").get<std::string>());
        run.validation = parse_validation(rec.at("validation").get<std::string>());
        run.seed = rec.at("seed");
        run.criteria = criteria_from_json(rec.at("criteria"));
        out.config = run_config_from_json(rec.at("config"));
        for (const auto& l : rec.at("lanes")) {
          LaneInfo info;
          for (const auto& seg : l.at("skeleton")) info.skeleton.push_back({seg.at("name"), seg.at("text")});
          for (const auto& id : l.at("criteria")) info.criteria.push_back(find_criterion(run.criteria, id.get<std::string>()));
          info.fingerprint = l.at("skeleton_fingerprint");
          if (skeleton_fingerprint(info.skeleton) != info.fingerprint) {
            throw DatasetError("lane skeleton does not match its fingerprint", line_no);
          }
          run.lanes.push_back(l.at("scope"));
          lanes[l.at("scope")] = std::move(info);
        }
      } else if (event == "StepStarted") {
        const std::string scope = rec.at("scope");
        if (!lanes.contains(scope)) throw DatasetError(fmt::format("unknown lane '{}'", scope), line_no);
        open_step[scope] = rec.at("step");
      } else if (event == "LlmCall") {
        if (!rec.contains("stage") || !rec.contains("scope")) {
          throw DatasetError("LlmCall without stage or scope tag", line_no);
        }
        LoggedCall lc;
        lc.step = rec.at("step");
        lc.call.stage = parse_stage(rec.at("stage").get<std::string>());
        lc.call.scope = rec.at("scope");
        lc.call.fingerprint = rec.at("fingerprint");
        lc.call.temperature = rec.at("temperature");
        if (!rec.at("seed").is_null()) lc.call.seed = rec.at("seed").get<std::uint64_t>();
        lc.call.backend_id = rec.at("backend_id");
        lc.call.usage = {rec.at("usage").at("prompt_units"), rec.at("usage").at("completion_units")};
        out.calls.push_back(std::move(lc));
      } else if (event == "CandidateEvaluated") {
        const std::string scope = rec.at("scope");
        const int step = rec.at("step");
        auto lane = lanes.find(scope);
        if (lane == lanes.end()) throw DatasetError(fmt::format("unknown lane '{}'", scope), line_no);
        if (!open_step.contains(scope) || open_step[scope] != step) {
          throw DatasetError("CandidateEvaluated outside its step", line_no);
        }
        JudgePrompt prompt(lane->second.skeleton, lane->second.criteria,
                           rec.at("instructions").get<InstructionMap>());
        if (prompt.skeleton_fingerprint() != rec.at("skeleton_fingerprint").get<std::string>()) {
          throw DatasetError("candidate skeleton fingerprint differs from its lane", line_no);
        }
        std::optional<MetricVector> val;
        if (!rec.at("val_metrics").is_null()) val = metric_vector_from_json(rec.at("val_metrics"));
        run.candidates.push_back({step, rec.at("seed"), scope, std::move(prompt), std::move(val),
                                  metric_vector_from_json(rec.at("test_metrics")), rec.at("accepted")});
        if (step == 0) {
          open_step.erase(scope);
          last_completed[scope] = 0;
        }
      } else if (event == "GateDecision") {
        // Folded into the StepCompleted trace.
      } else if (event == "StepCompleted") {
        const std::string scope = rec.at("scope");
        const int step = rec.at("step");
        if (!open_step.contains(scope) || open_step[scope] != step) {
          throw DatasetError("StepCompleted without a matching StepStarted", line_no);
        }
        open_step.erase(scope);
        last_completed[scope] = step;
        run.traces.push_back(trace_from_json(rec.at("trace")));
      } else if (event == "Error") {
        run.failed = true;
        run.failed_step = rec.at("step").get<int>();
        run.error = rec.at("message");
      } else if (event == "RunCompleted") {
        out.completed = true;
      } else {
        throw DatasetError(fmt::format("unknown event '{}'", event), line_no);
      }
    } catch (const json::exception& e) {
      throw DatasetError(fmt::format("{}: malformed record: {}", path.string(), e.what()), line_no);
    }
  }
  if (!started) throw DatasetError(fmt::format("{}: empty run log", path.string()));

  run.completed_steps = -1;
  if (last_completed.size() == run.lanes.size()) {
    run.completed_steps = std::min_element(last_completed.begin(), last_completed.end(),
                                           [](const auto& a, const auto& b) { return a.second < b.second; })
                              ->second;
  }
  build_trajectory(run);
  return out;
}

std::vector<LoadedRun> load_run_logs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (entry.is_regular_file() && name.rfind("run_", 0) == 0 && entry.path().extension() == ".jsonl") {
        files.push_back(entry.path());
      }
    }
  }
  if (files.empty()) throw PreconditionError(fmt::format("no run logs found in {}", dir.string()));
  std::sort(files.begin(), files.end());
  std::vector<LoadedRun> runs;
  for (const auto& f : files) runs.push_back(load_run_log(f));
  return runs;
}

}  // namespace mograd
