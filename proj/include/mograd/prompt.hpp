#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mograd/core.hpp"

namespace mograd {

struct SkeletonSegment {
  std::string name;
  std::string text;  // may contain {instructions}, {summary}, {source}

  bool operator==(const SkeletonSegment&) const = default;
};

/// The judge prompt: a frozen skeleton plus one mutable instruction per
/// criterion. Only the instructions change during optimization.
class JudgePrompt {
 public:
  /// Throws ConfigError when `instructions` names a criterion outside `criteria`.
  JudgePrompt(std::vector<SkeletonSegment> skeleton, std::vector<Criterion> criteria,
              InstructionMap instructions);

  /// The generic starting prompt: "Rate from {min} to {max}." for every criterion.
  static JudgePrompt initial(const std::vector<Criterion>& criteria);

  /// Skeleton for the given criteria; its output format lists exactly those keys.
  static std::vector<SkeletonSegment> default_skeleton(const std::vector<Criterion>& criteria);

  const std::vector<SkeletonSegment>& skeleton_segments() const { return skeleton_; }
  const std::vector<Criterion>& criteria() const { return criteria_; }
  const InstructionMap& instructions() const { return instructions_; }
  const std::string& skeleton_fingerprint() const { return fingerprint_; }

  /// Throws ConfigError when the criterion has no instruction.
  const std::string& instruction(std::string_view criterion) const;

  JudgePrompt with_instructions(InstructionMap instructions) const;

 private:
  std::vector<SkeletonSegment> skeleton_;
  std::vector<Criterion> criteria_;
  InstructionMap instructions_;
  std::string fingerprint_;
};

/// Digest over the skeleton segments with their slots left as placeholders.
std::string skeleton_fingerprint(const std::vector<SkeletonSegment>& skeleton);

/// The "- id: instruction" lines in criterion order. Throws ConfigError when a
/// criterion has no (or an empty) instruction.
std::string format_instruction_lines(const JudgePrompt& prompt);

/// Interpolates instructions and sample into the frozen skeleton.
std::string render_prompt(const JudgePrompt& prompt, const Sample& sample);

/// Extracts the first well-formed JSON object in `raw` and maps it onto the
/// criteria. Throws ParseError when no object is found or it has missing or
/// extra keys, non-integer values or out-of-scale values.
Prediction parse_prediction(std::string_view raw, const std::vector<Criterion>& criteria);

/// Serializes scores as a JSON object in criterion order.
std::string format_scores(const std::map<std::string, int>& scores,
                          const std::vector<Criterion>& criteria);

/// Returns the first balanced {...} substring that parses as a JSON object,
/// or an empty view when there is none.
std::string_view find_first_json_object(std::string_view text);

}  // namespace mograd
