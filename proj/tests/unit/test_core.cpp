#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "mograd/core.hpp"
#include "mograd/digest.hpp"
#include "mograd/prompt.hpp"
#include "mograd/template.hpp"

using namespace mograd;

namespace {

Sample sample() {
  return {"s1", "The council approved the budget on Monday.", "Budget approved.",
          {{"fluency", 4.0}, {"relevance", 3.0}, {"coherence", 4.5}, {"consistency", 5.0}}};
}

// Everything outside the instruction lines of a rendered prompt.
std::string skeleton_region(const std::string& rendered) {
  const std::string open = "## Instructions:\n";
  const auto a = rendered.find(open);
  const auto b = rendered.find("\n\n\n## Sample:");
  EXPECT_NE(a, std::string::npos);
  EXPECT_NE(b, std::string::npos);
  return rendered.substr(0, a + open.size()) + rendered.substr(b);
}

// Reference extraction: the first flat {"key": int, ...} object in the text
// decides; keys must be exactly the criteria and values in scale.
std::optional<std::map<std::string, int>> reference_parse(const std::string& raw,
                                                          const std::vector<Criterion>& criteria) {
  static const std::regex flat(R"(\{[^{}]*\})");
  static const std::regex strict(R"(^\{\s*"\w+"\s*:\s*-?[0-9]+\s*(,\s*"\w+"\s*:\s*-?[0-9]+\s*)*\}$)");
  static const std::regex pair(R"re("(\w+)"\s*:\s*(-?[0-9]+))re");
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), flat); it != std::sregex_iterator(); ++it) {
    const std::string obj = it->str();
    if (!std::regex_match(obj, strict)) continue;
    std::map<std::string, int> out;
    for (auto p = std::sregex_iterator(obj.begin(), obj.end(), pair); p != std::sregex_iterator(); ++p) {
      out[(*p)[1]] = std::stoi((*p)[2]);
    }
    if (out.size() != criteria.size()) return std::nullopt;
    for (const auto& c : criteria) {
      auto f = out.find(c.id);
      if (f == out.end() || f->second < c.scale_min || f->second > c.scale_max) return std::nullopt;
    }
    return out;
  }
  return std::nullopt;
}

}  // namespace

TEST(Criterion, DefaultsAreCanonical) {
  const auto c = default_criteria();
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(criterion_ids(c), (std::vector<std::string>{"fluency", "relevance", "coherence", "consistency"}));
  for (const auto& x : c) {
    EXPECT_LT(x.scale_min, x.scale_max);
    EXPECT_EQ(x.midpoint(), 3);
  }
  EXPECT_THROW(find_criterion(c, "style"), ConfigError);
}

TEST(ParseMode, KnownCodes) {
  const auto ssc = parse_mode("SSC");
  EXPECT_FALSE(ssc.is_single_task());
  EXPECT_EQ(ssc.loss(), StageMode::Separate);
  EXPECT_EQ(ssc.gradient(), StageMode::Separate);
  EXPECT_EQ(ssc.optimizer(), StageMode::Combined);

  const auto ccc = parse_mode("ccc");
  EXPECT_EQ(ccc.loss(), StageMode::Combined);
  EXPECT_EQ(ccc.gradient(), StageMode::Combined);
  EXPECT_EQ(ccc.optimizer(), StageMode::Combined);

  EXPECT_TRUE(parse_mode("Single").is_single_task());
  EXPECT_EQ(parse_mode("sss").code(), "sss");
  EXPECT_EQ(parse_mode("scc").code(), "scc");
}

TEST(ParseMode, RejectsUndefinedCodes) {
  for (const char* code : {"scs", "csc", "ccs", "css", "", "ss", "ssss", "xyz"}) {
    EXPECT_THROW(parse_mode(code), InvalidModeError) << code;
  }
  EXPECT_THROW(DecompositionMode::triple(StageMode::Combined, StageMode::Separate, StageMode::Separate),
               InvalidModeError);
}

TEST(ParseValidation, Values) {
  EXPECT_EQ(parse_validation("mae"), ValidationPolicy::MaeGate);
  EXPECT_EQ(parse_validation("none"), ValidationPolicy::None);
  EXPECT_THROW(parse_validation("strict"), ConfigError);
}

TEST(RunConfig, Defaults) {
  RunConfig c;
  EXPECT_EQ(c.steps, 12);
  EXPECT_EQ(c.seeds.size(), 3u);
  EXPECT_EQ(c.gradient_paragraph_limit, 3);
  EXPECT_DOUBLE_EQ(c.temperatures.task, 1.0);
  EXPECT_DOUBLE_EQ(c.temperatures.loss, 0.3);
  EXPECT_DOUBLE_EQ(c.temperatures.gradient, 0.3);
  EXPECT_DOUBLE_EQ(c.temperatures.optimizer, 0.7);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, ValidateRejects) {
  RunConfig c;
  c.steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.minibatch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.temperatures.loss = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MetricVector, TaskAverageIsMeanOfDefined) {
  MetricVector mv{{{"a", 0.2, 1.0, 0.5}, {"b", 0.4, 0.5, 0.5}, {"c", std::nullopt, 0.3, 1.0}}, 0};
  EXPECT_DOUBLE_EQ(*mv.task_averaged_rho(), (0.2 + 0.4) / 2.0);
  EXPECT_DOUBLE_EQ(mv.task_averaged_mae(), 0.6);
  MetricVector none{{{"a", std::nullopt, 1.0, 0.5}}, 0};
  EXPECT_FALSE(none.task_averaged_rho().has_value());
  EXPECT_THROW(mv.at("d"), ConfigError);
}

TEST(RenderPrompt, InitialContainsGenericInstruction) {
  const auto p = JudgePrompt::initial(default_criteria());
  const auto text = render_prompt(p, sample());
  EXPECT_NE(text.find("- fluency: Rate from 1 to 5."), std::string::npos);
  EXPECT_NE(text.find("Summary: Budget approved."), std::string::npos);
  EXPECT_NE(text.find("Source Text: The council approved"), std::string::npos);
}

TEST(RenderPrompt, EmptyInstructionMapIsConfigError) {
  const auto c = default_criteria();
  JudgePrompt p(JudgePrompt::default_skeleton(c), c, {});
  EXPECT_THROW(render_prompt(p, sample()), ConfigError);
  EXPECT_THROW(p.instruction("fluency"), ConfigError);
}

TEST(RenderPrompt, UnknownCriterionInInstructionsIsConfigError) {
  const auto c = default_criteria();
  EXPECT_THROW(JudgePrompt(JudgePrompt::default_skeleton(c), c, {{"style", "x"}}), ConfigError);
}

TEST(RenderPrompt, SkeletonRegionIdenticalAcrossInstructionEdits) {
  const auto p = JudgePrompt::initial(default_criteria());
  auto edited = p.instructions();
  edited["coherence"] = "Check that each sentence follows from the previous one.\nPenalise jumps.";
  const auto q = p.with_instructions(edited);
  const auto a = render_prompt(p, sample());
  const auto b = render_prompt(q, sample());
  EXPECT_NE(a, b);
  EXPECT_EQ(sha256_hex(skeleton_region(a)), sha256_hex(skeleton_region(b)));
  EXPECT_EQ(p.skeleton_fingerprint(), q.skeleton_fingerprint());
}

TEST(RenderPrompt, SingleCriterionOutputFormatListsOnlyThatKey) {
  const auto c = default_criteria();
  const auto p = JudgePrompt::initial({c[2]});
  const auto text = render_prompt(p, sample());
  EXPECT_NE(text.find("\"coherence\": 1|2|3|4|5"), std::string::npos);
  EXPECT_EQ(text.find("\"fluency\""), std::string::npos);
  EXPECT_NE(p.skeleton_fingerprint(), JudgePrompt::initial(c).skeleton_fingerprint());
}

TEST(SkeletonFingerprint, ChangesWithSkeletonText) {
  auto seg = JudgePrompt::default_skeleton(default_criteria());
  const auto before = skeleton_fingerprint(seg);
  seg[0].text += " ";
  EXPECT_NE(before, skeleton_fingerprint(seg));
}

TEST(ParsePrediction, DirectObject) {
  const auto p = parse_prediction(R"({"fluency":3,"relevance":4,"coherence":2,"consistency":5})",
                                  default_criteria());
  EXPECT_EQ(p.scores, (std::map<std::string, int>{{"fluency", 3}, {"relevance", 4}, {"coherence", 2}, {"consistency", 5}}));
  EXPECT_EQ(p.parse_attempts, 1);
  EXPECT_FALSE(p.imputed);
}

TEST(ParsePrediction, Rejections) {
  const auto c = default_criteria();
  EXPECT_THROW(parse_prediction(R"({"fluency":6,"relevance":4,"coherence":2,"consistency":5})", c), ParseError);
  EXPECT_THROW(parse_prediction(R"({"fluency":0,"relevance":4,"coherence":2,"consistency":5})", c), ParseError);
  EXPECT_THROW(parse_prediction(R"({"fluency":3,"relevance":4,"coherence":2})", c), ParseError);
  EXPECT_THROW(parse_prediction(R"({"fluency":3,"relevance":4,"coherence":2,"consistency":5,"style":1})", c),
               ParseError);
  EXPECT_THROW(parse_prediction(R"({"fluency":3.5,"relevance":4,"coherence":2,"consistency":5})", c), ParseError);
  EXPECT_THROW(parse_prediction(R"({"fluency":"3","relevance":4,"coherence":2,"consistency":5})", c), ParseError);
  EXPECT_THROW(parse_prediction("I cannot rate this.", c), ParseError);
  EXPECT_THROW(parse_prediction("", c), ParseError);
}

TEST(ParsePrediction, TolerantExtractionMatchesReferenceOn20Fixtures) {
  const auto c = default_criteria();
  const std::vector<std::string> fixtures = {
      R"(Here is my evaluation: {"fluency":3,"relevance":4,"coherence":2,"consistency":5})",
      R"({"fluency": 1, "relevance": 1, "coherence": 1, "consistency": 1})",
      "```json\n{\"fluency\": 5, \"relevance\": 4, \"coherence\": 3, \"consistency\": 2}\n```",
      "Scores below.\n\n{\n  \"fluency\": 2,\n  \"relevance\": 2,\n  \"coherence\": 4,\n  \"consistency\": 4\n}\nDone.",
      R"({"consistency":5,"coherence":4,"relevance":3,"fluency":2})",
      R"(Evaluation {"fluency":4,"relevance":4,"coherence":4,"consistency":4} end)",
      R"(Note {curly} first. {"fluency":3,"relevance":3,"coherence":3,"consistency":3})",
      R"({"fluency":5,"relevance":5,"coherence":5,"consistency":5} {"fluency":1,"relevance":1,"coherence":1,"consistency":1})",
      "\t{\"fluency\":2,\"relevance\":3,\"coherence\":4,\"consistency\":5}\t",
      R"(Sure! {"fluency" : 4 , "relevance" : 2 , "coherence" : 5 , "consistency" : 1})",
      R"(Here is my evaluation: {"fluency":3,"relevance":4,"coherence":2})",
      R"({"fluency":6,"relevance":4,"coherence":2,"consistency":5})",
      R"(no json here)",
      R"({"fluency":2,"relevance":4,"coherence":2,"consistency":5)",
      "Reasoning: the summary is short.\n{\"fluency\":4,\"relevance\":2,\"coherence\":3,\"consistency\":5}",
      R"({"fluency":1,"relevance":2,"coherence":3,"consistency":4}.)",
      R"(JSON: {"fluency":5,"relevance":1,"coherence":5,"consistency":1} -- thanks)",
      "{\"fluency\":3,\n\"relevance\":3,\n\"coherence\":2,\n\"consistency\":2}",
      R"(Here is my evaluation: {"fluency":0,"relevance":4,"coherence":2,"consistency":5})",
      R"(text "quoted {" {"fluency":2,"relevance":5,"coherence":1,"consistency":3})",
  };
  ASSERT_EQ(fixtures.size(), 20u);
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const auto expected = reference_parse(fixtures[i], c);
    if (expected) {
      Prediction p;
      ASSERT_NO_THROW(p = parse_prediction(fixtures[i], c)) << "fixture " << i;
      EXPECT_EQ(p.scores, *expected) << "fixture " << i;
    } else {
      EXPECT_THROW(parse_prediction(fixtures[i], c), ParseError) << "fixture " << i;
    }
  }
}

TEST(ParsePrediction, RoundTripOverRandomScores) {
  const auto c = default_criteria();
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> d(1, 5);
  for (int i = 0; i < 500; ++i) {
    std::map<std::string, int> scores;
    for (const auto& x : c) scores[x.id] = d(rng);
    EXPECT_EQ(parse_prediction(format_scores(scores, c), c).scores, scores);
  }
}

TEST(ParsePrediction, RoundTripOnOneCriterion) {
  const auto c = default_criteria();
  const std::vector<Criterion> one{c[1]};
  EXPECT_EQ(parse_prediction(format_scores({{"relevance", 2}}, one), one).scores.at("relevance"), 2);
  EXPECT_THROW(parse_prediction(R"({"relevance":2,"fluency":3})", one), ParseError);
}

TEST(Template, SinglePassSubstitution) {
  EXPECT_EQ(render_template("a {x} b {y}", {{"x", "{y}"}, {"y", "2"}}), "a {y} b 2");
  EXPECT_EQ(render_template("json {\"k\": 1} {X}", {}), "json {\"k\": 1} {X}");
  EXPECT_THROW(render_template("{missing}", {}), ConfigError);
}
