#include "mograd/diagnostics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mograd/evaluate.hpp"
#include "mograd/parallel.hpp"
#include "mograd/template.hpp"

namespace mograd {

using nlohmann::json;

namespace {

constexpr int kDiagnosticsSchemaVersion = 1;

const PromptTemplates& templates_of(const DiagnosticOptions& o) {
  return o.templates ? *o.templates : PromptTemplates::builtin();
}

DiagnosticScore ask(DiagnosticKind kind, const std::string& content, std::string_view target,
                    const TextualGradient& gradient, ChatBackend& evaluator, const DiagnosticOptions& options) {
  DiagnosticScore s;
  s.kind = kind;
  s.criterion = std::string(target);
  s.gradient_scope = gradient.scope;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto req = make_request(content, Stage::Diagnostic, std::string(target), options.temperature,
                            request_seed(0xd1a6, {static_cast<std::uint64_t>(attempt)}));
    s.raw_response = evaluator.chat(req).text;
    s.score = parse_diagnostic_score(s.raw_response);
    if (s.score) return s;
  }
  spdlog::warn("{} score for '{}' missing; evaluator answered '{}'", to_string(kind), target, s.raw_response);
  return s;
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace

std::string to_string(DiagnosticKind kind) {
  return kind == DiagnosticKind::Specificity ? "specificity" : "adherence";
}

DiagnosticKind parse_diagnostic_kind(std::string_view text) {
  if (text == "specificity") return DiagnosticKind::Specificity;
  if (text == "adherence") return DiagnosticKind::Adherence;
  throw ConfigError(fmt::format("unknown diagnostic kind '{}'", text));
}

std::optional<int> parse_diagnostic_score(std::string_view raw) {
  const std::string t = trim(raw);
  if (t.empty() || t.size() > 2) return std::nullopt;
  if (!std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) return std::nullopt;
  const int v = std::stoi(t);
  if (v < 1 || v > 10) return std::nullopt;
  return v;
}

std::string render_specificity_prompt(const std::string& tmpl, std::string_view target,
                                      std::string_view gradient_text) {
  return render_template(tmpl, {{"task", std::string(target)}, {"gradient_text", std::string(gradient_text)}});
}

std::string render_adherence_prompt(const std::string& tmpl, std::string_view target,
                                    std::string_view old_instruction, std::string_view new_instruction,
                                    std::string_view gradient_text) {
  return render_template(tmpl, {{"task", std::string(target)},
                                {"old_instruction", std::string(old_instruction)},
                                {"new_instruction", std::string(new_instruction)},
                                {"gradient_text", std::string(gradient_text)}});
}

DiagnosticScore score_specificity(const TextualGradient& gradient, std::string_view target,
                                  ChatBackend& evaluator, const DiagnosticOptions& options) {
  if (trim(gradient.text).empty()) throw PreconditionError("score_specificity: empty gradient");
  const auto content = render_specificity_prompt(templates_of(options).specificity, target, gradient.text);
  return ask(DiagnosticKind::Specificity, content, target, gradient, evaluator, options);
}

DiagnosticScore score_adherence(std::string_view old_instruction, std::string_view new_instruction,
                                const TextualGradient& gradient, std::string_view target,
                                ChatBackend& evaluator, const DiagnosticOptions& options) {
  if (trim(old_instruction).empty() || trim(new_instruction).empty() || trim(gradient.text).empty()) {
    throw PreconditionError("score_adherence: empty input text");
  }
  const auto content = render_adherence_prompt(templates_of(options).adherence, target, old_instruction,
                                               new_instruction, gradient.text);
  return ask(DiagnosticKind::Adherence, content, target, gradient, evaluator, options);
}

std::vector<DiagnosticScore> score_run(const LoadedRun& loaded, DiagnosticKind kind, ChatBackend& evaluator,
                                       const DiagnosticOptions& options) {
  const SeedRun& run = loaded.run;
  struct Job {
    const StepTrace* trace;
    const TextualGradient* gradient;
    std::string target;
  };
  std::vector<Job> jobs;
  for (const auto& trace : run.traces) {
    if (trace.step < 1) continue;
    std::vector<std::string> lane_criteria;
    for (const auto& c : run.criteria) {
      if (trace.scope == kAllScope || trace.scope == c.id) lane_criteria.push_back(c.id);
    }
    if (kind == DiagnosticKind::Specificity) {
      for (const auto& g : trace.gradients) {
        if (g.scope == kAllScope) {
          for (const auto& c : lane_criteria) jobs.push_back({&trace, &g, c});
        } else {
          jobs.push_back({&trace, &g, g.scope});
        }
      }
    } else {
      const bool produced = std::any_of(run.candidates.begin(), run.candidates.end(), [&](const CandidateRecord& c) {
        return c.step == trace.step && c.scope == trace.scope;
      });
      if (!produced) continue;
      for (const auto& c : lane_criteria) {
        const TextualGradient* g = nullptr;
        for (const auto& cand : trace.gradients) {
          if (cand.scope == c) g = &cand;
        }
        for (const auto& cand : trace.gradients) {
          if (!g && cand.scope == kAllScope) g = &cand;
        }
        if (g) jobs.push_back({&trace, g, c});
      }
    }
  }

  std::vector<DiagnosticScore> out(jobs.size());
  parallel_for(jobs.size(), options.parallelism, [&](std::size_t i) {
    const Job& job = jobs[i];
    DiagnosticScore s;
    try {
      if (kind == DiagnosticKind::Specificity) {
        s = score_specificity(*job.gradient, job.target, evaluator, options);
      } else {
        s = score_adherence(job.trace->old_instructions.at(job.target), job.trace->new_instructions.at(job.target),
                            *job.gradient, job.target, evaluator, options);
      }
    } catch (const Error& e) {
      s.kind = kind;
      s.criterion = job.target;
      s.gradient_scope = job.gradient->scope;
      s.error = e.what();
      spdlog::warn("{} evaluation failed at step {} for '{}': {}", to_string(kind), job.trace->step, job.target,
                   e.what());
    }
    s.mode = run.mode;
    s.validation = run.validation;
    s.seed = run.seed;
    s.step = job.trace->step;
    out[i] = std::move(s);
  });
  return out;
}

json to_json(const DiagnosticScore& s) {
  return {{"schema_version", kDiagnosticsSchemaVersion},
          {"kind", to_string(s.kind)},
          {"mode", s.mode.code()},
          {"validation", to_string(s.validation)},
          {"seed", s.seed},
          {"step", s.step},
          {"criterion", s.criterion},
          {"gradient_scope", s.gradient_scope},
          {"score", s.score ? json(*s.score) : json(nullptr)},
          {"raw_response", s.raw_response},
          {"error", s.error}};
}

DiagnosticScore diagnostic_score_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != kDiagnosticsSchemaVersion) {
    throw DatasetError("unsupported diagnostics schema version");
  }
  DiagnosticScore s;
  s.kind = parse_diagnostic_kind(j.at("kind").get<std::string>());
  s.mode = parse_mode(j.at("mode").get<std::string>());
  s.validation = parse_validation(j.at("validation").get<std::string>());
  s.seed = j.at("seed");
  s.step = j.at("step");
  s.criterion = j.at("criterion");
  s.gradient_scope = j.at("gradient_scope");
  if (!j.at("score").is_null()) {
    const int v = j.at("score");
    if (v < 1 || v > 10) throw DatasetError(fmt::format("stored diagnostic score {} outside [1, 10]", v));
    s.score = v;
  }
  s.raw_response = j.at("raw_response");
  s.error = j.at("error");
  return s;
}

std::string diagnostics_file_name(DiagnosticKind kind) {
  return fmt::format("diagnostics_{}.jsonl", to_string(kind));
}

void write_diagnostics(const std::filesystem::path& path, const std::vector<DiagnosticScore>& scores) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  for (const auto& s : scores) out << to_json(s).dump() << '\n';
}

std::vector<DiagnosticScore> read_diagnostics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError(fmt::format("no diagnostics file {}; run `diagnose` first", path.string()));
  std::vector<DiagnosticScore> out;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(diagnostic_score_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DatasetError(fmt::format("malformed diagnostic record: {}", e.what()), line_no);
    } catch (const DatasetError& e) {
      throw DatasetError(e.what(), line_no);
    }
  }
  return out;
}

namespace {

// Sort key that follows report order for modes and criteria.
std::string sort_key(const std::string& field, const DiagnosticScore& s) {
  if (field == "kind") return to_string(s.kind);
  if (field == "mode") {
    const auto modes = all_modes();
    const auto it = std::find(modes.begin(), modes.end(), s.mode);
    return fmt::format("{:02d}", it - modes.begin());
  }
  if (field == "validation") return s.validation == ValidationPolicy::MaeGate ? "0" : "1";
  if (field == "seed") return fmt::format("{:020d}", s.seed);
  if (field == "step") return fmt::format("{:06d}", s.step);
  if (field == "criterion") {
    const auto ids = criterion_ids(default_criteria());
    const auto it = std::find(ids.begin(), ids.end(), s.criterion);
    return it != ids.end() ? fmt::format("{:02d}", it - ids.begin()) : "99" + s.criterion;
  }
  throw ConfigError(fmt::format("cannot group diagnostics by '{}'", field));
}

std::string field_value(const std::string& field, const DiagnosticScore& s) {
  if (field == "kind") return to_string(s.kind);
  if (field == "mode") return s.mode.code();
  if (field == "validation") return to_string(s.validation);
  if (field == "seed") return std::to_string(s.seed);
  if (field == "step") return std::to_string(s.step);
  return s.criterion;
}

}  // namespace

std::vector<DiagnosticAggregate> aggregate_diagnostics(const std::vector<DiagnosticScore>& scores,
                                                       const std::vector<std::string>& group_by) {
  struct Bucket {
    DiagnosticAggregate row;
    std::vector<double> values;
  };
  std::map<std::vector<std::string>, Bucket> buckets;
  for (const auto& s : scores) {
    std::vector<std::string> key;
    for (const auto& f : group_by) key.push_back(sort_key(f, s));
    auto& b = buckets[key];
    if (b.row.group.empty()) {
      for (const auto& f : group_by) b.row.group.emplace_back(f, field_value(f, s));
    }
    if (s.score) {
      b.values.push_back(*s.score);
    } else {
      ++b.row.missing;
    }
  }
  std::vector<DiagnosticAggregate> out;
  for (auto& [key, b] : buckets) {
    if (b.values.empty()) continue;
    const double n = static_cast<double>(b.values.size());
    double sum = 0.0;
    for (double v : b.values) sum += v;
    b.row.n = static_cast<int>(b.values.size());
    b.row.mean = sum / n;
    if (b.values.size() > 1) {
      double ss = 0.0;
      for (double v : b.values) ss += (v - b.row.mean) * (v - b.row.mean);
      b.row.std = std::sqrt(ss / (n - 1.0));
    }
    out.push_back(std::move(b.row));
  }
  return out;
}

}  // namespace mograd
