#include "mograd/template.hpp"

#include <fmt/format.h>

#include "mograd/error.hpp"

namespace mograd {

namespace {

bool is_name_char(char ch) { return (ch >= 'a' && ch <= 'z') || ch == '_'; }

}  // namespace

std::string render_template(std::string_view tmpl, const TemplateVars& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && is_name_char(tmpl[j])) ++j;
      if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
        std::string_view name = tmpl.substr(i + 1, j - i - 1);
        auto it = vars.find(name);
        if (it == vars.end()) {
          throw ConfigError(fmt::format("template placeholder '{{{}}}' has no value", name));
        }
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

}  // namespace mograd
