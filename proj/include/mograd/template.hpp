#pragma once

#include <map>
#include <string>
#include <string_view>

namespace mograd {

using TemplateVars = std::map<std::string, std::string, std::less<>>;

/// Substitutes `{name}` placeholders (lower-case letters and underscores) in a
/// single pass; substituted values are never rescanned. Braces that do not form
/// such a placeholder are copied verbatim. Throws ConfigError for a placeholder
/// with no value.
std::string render_template(std::string_view tmpl, const TemplateVars& vars);

}  // namespace mograd
