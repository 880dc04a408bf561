#include "mograd/prompt.hpp"

#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mograd/digest.hpp"
#include "mograd/template.hpp"

namespace mograd {

namespace {

constexpr std::string_view kRolePreamble =
    "You are a careful, calibrated evaluator. Your goal is to\n"
    "produce an accurate evaluation by following the\n"
    "Instructions below.";

constexpr std::string_view kTaskDirective =
    "## Task\n"
    "Evaluate the Summary given the Source Text using the\n"
    "Instructions below.\n"
    "1. Consider every strength and flaw you find when making\n"
    "your evaluation.\n"
    "2. Based on the number and severity of the strengths and\n"
    "flaws, assign a value.\n"
    "Use the Instructions below to perform your evaluation.\n"
    "Output a JSON with the requested scores. Do NOT include\n"
    "reasoning or explanations.";

constexpr std::string_view kInstructionsSection = "## Instructions:\n{instructions}";

// Leading newline: the sample section sits two blank lines below the instructions.
constexpr std::string_view kSampleSection =
    "\n"
    "## Sample:\n"
    "Summary: {summary}\n"
    "Source Text: {source}";

std::string output_format(const std::vector<Criterion>& criteria) {
  std::string out = "## Output format (follow this EXACTLY):\n{\n";
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    std::string scale;
    for (int v = c.scale_min; v <= c.scale_max; ++v) {
      if (!scale.empty()) scale += '|';
      scale += std::to_string(v);
    }
    out += fmt::format("  \"{}\": {}{}\n", c.id, scale, i + 1 < criteria.size() ? "," : "");
  }
  out += "}";
  return out;
}

}  // namespace

JudgePrompt::JudgePrompt(std::vector<SkeletonSegment> skeleton, std::vector<Criterion> criteria,
                         InstructionMap instructions)
    : skeleton_(std::move(skeleton)),
      criteria_(std::move(criteria)),
      instructions_(std::move(instructions)),
      fingerprint_(mograd::skeleton_fingerprint(skeleton_)) {
  for (const auto& [id, text] : instructions_) {
    (void)text;
    find_criterion(criteria_, id);
  }
}

JudgePrompt JudgePrompt::initial(const std::vector<Criterion>& criteria) {
  InstructionMap instructions;
  for (const auto& c : criteria) {
    instructions[c.id] = fmt::format("Rate from {} to {}.", c.scale_min, c.scale_max);
  }
  return {default_skeleton(criteria), criteria, std::move(instructions)};
}

std::vector<SkeletonSegment> JudgePrompt::default_skeleton(const std::vector<Criterion>& criteria) {
  return {
      {"role_preamble", std::string(kRolePreamble)},
      {"task_directive", std::string(kTaskDirective)},
      {"output_format", output_format(criteria)},
      {"instructions", std::string(kInstructionsSection)},
      {"sample", std::string(kSampleSection)},
  };
}

const std::string& JudgePrompt::instruction(std::string_view criterion) const {
  auto it = instructions_.find(std::string(criterion));
  if (it == instructions_.end()) {
    throw ConfigError(fmt::format("prompt has no instruction for '{}'", criterion));
  }
  return it->second;
}

JudgePrompt JudgePrompt::with_instructions(InstructionMap instructions) const {
  return {skeleton_, criteria_, std::move(instructions)};
}

std::string skeleton_fingerprint(const std::vector<SkeletonSegment>& skeleton) {
  std::string buf;
  for (const auto& seg : skeleton) {
    buf += seg.name;
    buf += '\x1e';
    buf += seg.text;
    buf += '\x1f';
  }
  return sha256_hex(buf);
}

std::string format_instruction_lines(const JudgePrompt& prompt) {
  std::string lines;
  for (const auto& c : prompt.criteria()) {
    auto it = prompt.instructions().find(c.id);
    if (it == prompt.instructions().end() || it->second.empty()) {
      throw ConfigError(fmt::format("missing instruction for criterion '{}'", c.id));
    }
    if (!lines.empty()) lines += '\n';
    lines += fmt::format("- {}: {}", c.id, it->second);
  }
  return lines;
}

std::string render_prompt(const JudgePrompt& prompt, const Sample& sample) {
  const TemplateVars vars{{"instructions", format_instruction_lines(prompt)},
                          {"summary", sample.summary_text},
                          {"source", sample.source_text}};
  std::string out;
  for (const auto& seg : prompt.skeleton_segments()) {
    if (!out.empty()) out += "\n\n";
    out += render_template(seg.text, vars);
  }
  return out;
}

std::string_view find_first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char ch = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (ch == '\\') {
          escaped = true;
        } else if (ch == '"') {
          in_string = false;
        }
        continue;
      }
      if (ch == '"') {
        in_string = true;
      } else if (ch == '{') {
        ++depth;
      } else if (ch == '}') {
        if (--depth == 0) {
          std::string_view candidate = text.substr(start, i - start + 1);
          if (nlohmann::json::accept(candidate)) return candidate;
          break;
        }
      }
    }
  }
  return {};
}

Prediction parse_prediction(std::string_view raw, const std::vector<Criterion>& criteria) {
  const std::string_view object = find_first_json_object(raw);
  if (object.empty()) throw ParseError("no JSON object found in response");
  const auto json = nlohmann::json::parse(object);

  Prediction pred;
  std::set<std::string> expected;
  for (const auto& c : criteria) expected.insert(c.id);
  for (const auto& [key, value] : json.items()) {
    if (!expected.contains(key)) throw ParseError(fmt::format("unexpected key '{}'", key));
  }
  for (const auto& c : criteria) {
    auto it = json.find(c.id);
    if (it == json.end()) throw ParseError(fmt::format("missing key '{}'", c.id));
    if (!it->is_number_integer()) {
      throw ParseError(fmt::format("score for '{}' is not an integer", c.id));
    }
    const auto v = it->get<long long>();
    if (v < c.scale_min || v > c.scale_max) {
      throw ParseError(fmt::format("score {} for '{}' is outside [{}, {}]", v, c.id, c.scale_min,
                                   c.scale_max));
    }
    pred.scores[c.id] = static_cast<int>(v);
  }
  pred.parse_attempts = 1;
  return pred;
}

std::string format_scores(const std::map<std::string, int>& scores,
                          const std::vector<Criterion>& criteria) {
  std::string out = "{";
  for (const auto& c : criteria) {
    if (out.size() > 1) out += ", ";
    out += fmt::format("\"{}\": {}", c.id, scores.at(c.id));
  }
  out += "}";
  return out;
}

}  // namespace mograd
