#include "mograd/stage_prompts.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

#include <fmt/format.h>

#include "mograd/error.hpp"

namespace mograd {

namespace detail {
// Generated from prompts/*.txt by the build.
const std::map<std::string_view, std::string_view>& builtin_prompt_table();
}  // namespace detail

namespace {

std::string builtin_text(std::string_view name) {
  const auto& table = detail::builtin_prompt_table();
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError(fmt::format("no built-in prompt template '{}'", name));
  return std::string(it->second);
}

template <typename Fn>
void for_each_slot(PromptTemplates& t, Fn&& fn) {
  fn("loss_separate", t.loss_separate);
  fn("loss_combined", t.loss_combined);
  fn("gradient_separate", t.gradient_separate);
  fn("gradient_combined", t.gradient_combined);
  fn("optimizer_separate", t.optimizer_separate);
  fn("optimizer_combined", t.optimizer_combined);
  fn("specificity", t.specificity);
  fn("adherence", t.adherence);
}

}  // namespace

const PromptTemplates& PromptTemplates::builtin() {
  static const PromptTemplates templates = [] {
    PromptTemplates t;
    for_each_slot(t, [](std::string_view name, std::string& slot) { slot = builtin_text(name); });
    return t;
  }();
  return templates;
}

PromptTemplates PromptTemplates::with_overrides(const std::filesystem::path& dir) {
  PromptTemplates t = builtin();
  for_each_slot(t, [&](std::string_view name, std::string& slot) {
    const auto path = dir / (std::string(name) + ".txt");
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    slot = ss.str();
  });
  return t;
}

}  // namespace mograd
