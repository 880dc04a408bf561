#pragma once
// Editable templates for the loss, gradient and optimizer stages and the two
// diagnostic evaluators. The built-in copies are embedded from prompts/*.txt;
// a directory of same-named files can override any of them.

#include <filesystem>
#include <string>

namespace mograd {

struct PromptTemplates {
  std::string loss_separate;
  std::string loss_combined;
  std::string gradient_separate;
  std::string gradient_combined;
  std::string optimizer_separate;
  std::string optimizer_combined;
  std::string specificity;
  std::string adherence;

  static const PromptTemplates& builtin();
  /// Built-in templates with any `<name>.txt` found in `dir` substituted.
  static PromptTemplates with_overrides(const std::filesystem::path& dir);
};

}  // namespace mograd
