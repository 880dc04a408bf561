#include "mograd/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mograd/prompt.hpp"

namespace mograd {

namespace {

constexpr int kWorldSchemaVersion = 1;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  return lower(haystack).find(lower(needle)) != std::string::npos;
}

// Text strictly between the first `open` and the following `close` marker.
std::string between(const std::string& text, std::string_view open, std::string_view close) {
  const auto a = text.find(open);
  if (a == std::string::npos) {
    throw ProtocolError(fmt::format("synthetic backend: marker '{}' not found", open));
  }
  const auto start = a + open.size();
  const auto b = text.find(close, start);
  if (b == std::string::npos) {
    throw ProtocolError(fmt::format("synthetic backend: marker '{}' not found", close));
  }
  return text.substr(start, b - start);
}

// Same, but the closing marker is searched from the end of the text.
std::string between_last(const std::string& text, std::string_view open, std::string_view close) {
  const auto a = text.find(open);
  const auto b = text.rfind(close);
  if (a == std::string::npos || b == std::string::npos || b < a + open.size()) {
    throw ProtocolError(fmt::format("synthetic backend: section '{}' not found", open));
  }
  return text.substr(a + open.size(), b - a - open.size());
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double synthetic_noise(std::string_view sample_id, std::string_view criterion_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  auto feed = [&](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  feed(sample_id);
  feed("|");
  feed(criterion_id);
  const std::uint64_t bits = mix64(h) >> 11;  // 53 bits
  return static_cast<double>(bits) / 9007199254740992.0 * 2.0 - 1.0;
}

std::map<std::string, std::string> SyntheticWorld::default_anchors() {
  return {{"fluency", "grammatical sentence flow"},
          {"relevance", "key-point coverage"},
          {"coherence", "logical ordering of ideas"},
          {"consistency", "factual agreement with the source"}};
}

SyntheticWorld SyntheticWorld::generate(std::size_t n, std::uint64_t seed) {
  SyntheticWorld world;
  world.criteria = default_criteria();
  world.anchors = default_anchors();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> base_dist(1.5, 4.5);
  std::normal_distribution<double> annotator(0.0, 0.7);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = fmt::format("syn-{:04d}", i);
    s.source_text = fmt::format("Article {}: a synthetic news story used to exercise the judge.", i);
    s.summary_text = fmt::format("Summary {} of article {}.", i, i);
    const double base = base_dist(rng);
    for (const auto& c : world.criteria) {
      double sum = 0.0;
      for (int a = 0; a < 3; ++a) {
        sum += std::clamp(std::round(base + annotator(rng)), static_cast<double>(c.scale_min),
                          static_cast<double>(c.scale_max));
      }
      s.truth[c.id] = sum / 3.0;
    }
    world.samples.push_back(std::move(s));
  }
  return world;
}

SyntheticWorld SyntheticWorld::from_samples(std::vector<Sample> samples,
                                            std::vector<Criterion> criteria) {
  SyntheticWorld world;
  world.criteria = std::move(criteria);
  world.anchors = default_anchors();
  world.samples = std::move(samples);
  for (const auto& c : world.criteria) {
    if (!world.anchors.contains(c.id)) world.anchors[c.id] = fmt::format("precise {} evidence", c.id);
  }
  return world;
}

SyntheticWorld SyntheticWorld::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(fmt::format("cannot open world file {}", path.string()));
  const auto json = nlohmann::json::parse(in, nullptr, false);
  if (json.is_discarded()) throw DatasetError(fmt::format("world file {} is not valid JSON", path.string()));
  try {
    SyntheticWorld world;
    for (const auto& c : json.at("criteria")) {
      world.criteria.push_back({c.at("id").get<std::string>(), c.at("scale_min").get<int>(),
                                c.at("scale_max").get<int>()});
    }
    world.anchors = json.at("anchors").get<std::map<std::string, std::string>>();
    for (const auto& s : json.at("samples")) {
      world.samples.push_back({s.at("id").get<std::string>(), s.at("source").get<std::string>(),
                               s.at("summary").get<std::string>(),
                               s.at("latent").get<std::map<std::string, double>>()});
    }
    for (const auto& c : world.criteria) {
      if (!world.anchors.contains(c.id)) {
        throw DatasetError(fmt::format("world file has no anchor for '{}'", c.id));
      }
    }
    return world;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(fmt::format("malformed world file {}: {}", path.string(), e.what()));
  }
}

void SyntheticWorld::save(const std::filesystem::path& path) const {
  nlohmann::json json;
  json["schema_version"] = kWorldSchemaVersion;
  auto& crit = json["criteria"] = nlohmann::json::array();
  for (const auto& c : criteria) {
    crit.push_back({{"id", c.id}, {"scale_min", c.scale_min}, {"scale_max", c.scale_max}});
  }
  json["anchors"] = anchors;
  auto& samples_json = json["samples"] = nlohmann::json::array();
  for (const auto& s : samples) {
    samples_json.push_back(
        {{"id", s.id}, {"source", s.source_text}, {"summary", s.summary_text}, {"latent", s.truth}});
  }
  std::ofstream out(path);
  out << json.dump(1) << '\n';
}

int SyntheticWorld::judge_score(const Sample& sample, const Criterion& criterion,
                                bool anchored) const {
  const double truth = sample.truth.at(criterion.id);
  const double u = synthetic_noise(sample.id, criterion.id);
  const double raw = anchored ? truth + 0.3 * u : 3.6 + 0.25 * (truth - 3.0) + 1.2 * u;
  return static_cast<int>(std::clamp(std::round(raw), static_cast<double>(criterion.scale_min),
                                     static_cast<double>(criterion.scale_max)));
}

SyntheticBackend::SyntheticBackend(SyntheticWorld world) : world_(std::move(world)) {
  for (std::size_t i = 0; i < world_.samples.size(); ++i) {
    by_summary_.emplace(world_.samples[i].summary_text, i);
  }
}

ChatResponse SyntheticBackend::chat(const ChatRequest& request) {
  request.validate();
  const std::string& text = request.messages.back().content;
  std::string out;
  switch (request.stage) {
    case Stage::Task: out = task_response(text); break;
    case Stage::Loss: out = loss_response(text); break;
    case Stage::Gradient: out = gradient_response(request, text); break;
    case Stage::Optimizer: out = optimizer_response(request, text); break;
    case Stage::Diagnostic: out = diagnostic_response(text); break;
    default: throw ProtocolError("synthetic backend: unknown stage tag");
  }
  ChatResponse resp;
  resp.text = std::move(out);
  resp.backend_id = id();
  resp.usage.prompt_units = static_cast<int>(text.size() / 4);
  resp.usage.completion_units = static_cast<int>(resp.text.size() / 4);
  return resp;
}

std::string SyntheticBackend::task_response(const std::string& text) const {
  const std::string format_block = between(text, "## Output format (follow this EXACTLY):\n{\n", "\n}");
  std::vector<std::string> keys;
  static const std::regex key_re(R"re("([A-Za-z_]+)"\s*:)re");
  for (auto it = std::sregex_iterator(format_block.begin(), format_block.end(), key_re);
       it != std::sregex_iterator(); ++it) {
    keys.push_back((*it)[1]);
  }

  // Split the instruction section into per-criterion blocks.
  const std::string section = between(text, "## Instructions:\n", "\n\n\n## Sample:\n");
  std::map<std::string, std::string> blocks;
  std::string current;
  std::istringstream lines(section);
  for (std::string line; std::getline(lines, line);) {
    bool starts_block = false;
    for (const auto& c : world_.criteria) {
      const std::string prefix = "- " + c.id + ":";
      if (line.rfind(prefix, 0) == 0) {
        current = c.id;
        blocks[current] += line.substr(prefix.size());
        starts_block = true;
        break;
      }
    }
    if (!starts_block && !current.empty()) blocks[current] += "\n" + line;
  }

  const std::string summary = between(text, "## Sample:\nSummary: ", "\nSource Text: ");
  auto found = by_summary_.find(summary);
  if (found == by_summary_.end()) {
    throw ProtocolError("synthetic backend: sample is not part of the world");
  }
  const Sample& sample = world_.samples[found->second];

  std::map<std::string, int> scores;
  std::vector<Criterion> in_prompt;
  for (const auto& key : keys) {
    const Criterion& c = find_criterion(world_.criteria, key);
    const bool anchored = contains_ci(blocks[key], world_.anchors.at(key));
    scores[key] = world_.judge_score(sample, c, anchored);
    in_prompt.push_back(c);
  }
  return format_scores(scores, in_prompt);
}

std::string SyntheticBackend::loss_response(const std::string& text) const {
  static const std::regex line_re(R"re(- ([A-Za-z_]+): judge (\d+), human ([0-9.]+))re");
  std::string out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), line_re); it != std::sregex_iterator();
       ++it) {
    const std::string c = (*it)[1];
    const int judged = std::stoi((*it)[2]);
    const double human = std::stod((*it)[3]);
    if (!out.empty()) out += "\n";
    if (std::abs(judged - human) < 0.5) {
      out += fmt::format("{}: the judge score {} agrees with the human score {:.2f}.", c, judged, human);
    } else {
      out += fmt::format(
          "{}: the judge gave {} but the human score is {:.2f}; the {} instruction does not say what "
          "separates the score levels.",
          c, judged, human, c);
    }
  }
  if (out.empty()) throw ProtocolError("synthetic backend: loss request carries no score lines");
  return out;
}

std::string SyntheticBackend::gradient_response(const ChatRequest& request,
                                                const std::string& text) const {
  const std::string critiques = between_last(text, "## Critiques\n", "\n\nUsing the critiques");
  std::vector<const Criterion*> named;
  for (const auto& c : world_.criteria) {
    // Only criteria with at least one disagreeing critique get a concrete suggestion.
    if (critiques.find(c.id + ": the judge gave") != std::string::npos) named.push_back(&c);
  }
  const std::string generic =
      "Make the instruction more precise about what distinguishes adjacent score levels.";
  if (named.empty()) return generic;
  if (request.scope != kAllScope) {
    std::string out;
    for (const auto* c : named) {
      if (!out.empty()) out += "\n\n";
      out += fmt::format(
          "For {}: tell the judge to assess \"{}\" explicitly and to tie every score level to it.",
          c->id, world_.anchors.at(c->id));
    }
    return out;
  }
  // A joint gradient only turns the most-disputed criterion into a concrete
  // suggestion; the rest get generic advice.
  auto disputes = [&](const Criterion& c) {
    const std::string needle = c.id + ": the judge gave";
    std::size_t n = 0;
    for (auto pos = critiques.find(needle); pos != std::string::npos; pos = critiques.find(needle, pos + 1)) ++n;
    return n;
  };
  const Criterion* top = named.front();
  for (const auto* c : named) {
    if (disputes(*c) > disputes(*top)) top = c;
  }
  std::string others;
  for (const auto* c : named) {
    if (c == top) continue;
    others += others.empty() ? c->id : ", " + c->id;
  }
  std::string out = fmt::format("Across the criteria: for {}, assess \"{}\" explicitly.", top->id,
                                world_.anchors.at(top->id));
  if (!others.empty()) {
    out += fmt::format("\n\nFor {}, make the instructions more precise about what distinguishes "
                       "adjacent score levels.",
                       others);
  }
  return out;
}

std::string SyntheticBackend::optimizer_response(const ChatRequest& request,
                                                 const std::string& text) const {
  const std::string feedback = between_last(text, "## Feedback\n", "\n\n## Task\n");
  auto revise = [&](const std::string& criterion, std::string instruction) {
    const std::string& anchor = world_.anchors.at(criterion);
    if (contains_ci(feedback, anchor) && !contains_ci(instruction, anchor)) {
      instruction += fmt::format(" Assess {} explicitly.", anchor);
    }
    return instruction;
  };
  if (request.scope != kAllScope) {
    const std::string instruction = between(text, "## Current instruction\n", "\n\n## Feedback\n");
    return "<new_instruction>" + revise(request.scope, instruction) + "</new_instruction>";
  }
  const std::string current = between(text, "## Current instructions\n", "\n\n## Feedback\n");
  auto json = nlohmann::json::parse(current, nullptr, false);
  if (json.is_discarded() || !json.is_object()) {
    throw ProtocolError("synthetic backend: current instructions are not a JSON object");
  }
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [criterion, instruction] : json.items()) {
    out[criterion] = world_.anchors.contains(criterion)
                         ? revise(criterion, instruction.get<std::string>())
                         : instruction.get<std::string>();
  }
  return out.dump();
}

std::string SyntheticBackend::diagnostic_response(const std::string& text) const {
  auto mentions = [&](std::string_view body, const std::string& criterion) {
    return contains_ci(body, criterion) || contains_ci(body, world_.anchors.at(criterion));
  };
  static const std::regex target_re(R"re("([A-Za-z_]+)" task)re");
  std::smatch m;
  if (!std::regex_search(text, m, target_re)) {
    throw ProtocolError("synthetic backend: diagnostic request names no target task");
  }
  const std::string target = m[1];
  if (!world_.anchors.contains(target)) throw ProtocolError("synthetic backend: unknown target task");

  if (text.find("## Old Instructions\n") != std::string::npos) {
    const std::string old_instr = between(text, "## Old Instructions\n", "\n\n## New Instructions\n");
    const std::string new_instr =
        between(text, "## New Instructions\n", "\n\n## Gradient (Suggested Changes)\n");
    const std::string gradient = between_last(text, "## Gradient (Suggested Changes)\n",
                                              "\n\nRespond with ONLY");
    const std::string& anchor = world_.anchors.at(target);
    if (contains_ci(gradient, anchor)) return contains_ci(new_instr, anchor) ? "9" : "2";
    return new_instr == old_instr ? "8" : "5";
  }

  const std::string gradient = between_last(text, "## The Gradient\n", "\n\nRespond with ONLY");
  if (!mentions(gradient, target)) return "2";
  int others = 0;
  for (const auto& c : world_.criteria) {
    if (c.id != target && mentions(gradient, c.id)) ++others;
  }
  return std::to_string(others == 0 ? 9 : std::max(1, 7 - 2 * others));
}

}  // namespace mograd
