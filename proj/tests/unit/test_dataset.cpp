#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mograd/dataset.hpp"
#include "mograd/synthetic.hpp"

using namespace mograd;

namespace {

std::string record(const std::string& id, const std::string& annotations) {
  return fmt::format(R"({{"id": "{}", "source": "src {}", "summary": "sum {}", "annotations": {{{}}}}})", id, id, id,
                     annotations);
}

const std::string kFull =
    R"("fluency": [4, 5, 5], "relevance": [3], "coherence": [2, 4], "consistency": [5, 5, 5])";

LoadedDataset load(const std::string& text) {
  std::istringstream in(text);
  return load_dataset(in);
}

int error_line(const std::string& text) {
  try {
    load(text);
  } catch (const DatasetError& e) {
    return e.line();
  }
  return -1;
}

std::vector<Sample> numbered(std::size_t n) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s{fmt::format("id-{:04d}", i), "src", "sum", {}};
    for (const auto& c : default_criteria()) s.truth[c.id] = 3.0;
    out.push_back(std::move(s));
  }
  return out;
}

std::set<std::string> ids(const std::vector<Sample>& v) {
  std::set<std::string> out;
  for (const auto& s : v) out.insert(s.id);
  return out;
}

}  // namespace

TEST(LoadDataset, TruthIsAnnotatorMean) {
  const auto d = load(record("a", kFull) + "\n\n" + record("b", kFull) + "\n");
  ASSERT_EQ(d.samples.size(), 2u);
  const auto& t = d.samples[0].truth;
  EXPECT_NEAR(t.at("fluency"), 4.6667, 1e-4);
  EXPECT_DOUBLE_EQ(t.at("relevance"), 3.0);
  EXPECT_DOUBLE_EQ(t.at("coherence"), 3.0);
  EXPECT_EQ(d.samples[0].source_text, "src a");
  EXPECT_EQ(d.samples[0].summary_text, "sum a");
  EXPECT_EQ(d.criteria, default_criteria());
}

TEST(LoadDataset, AnnotatorOrderDoesNotMatter) {
  const auto a = load(record("a", R"("fluency": [1, 4, 5, 2], "relevance": [3], "coherence": [2], "consistency": [5])"));
  const auto b = load(record("a", R"("fluency": [5, 2, 4, 1], "relevance": [3], "coherence": [2], "consistency": [5])"));
  EXPECT_EQ(a.samples[0].truth, b.samples[0].truth);
}

TEST(LoadDataset, ErrorsNameTheLine) {
  const std::string ok = record("ok", kFull) + "\n";
  EXPECT_EQ(error_line(ok + record("x", R"("fluency": [4], "relevance": [3], "consistency": [5])")), 2);
  EXPECT_EQ(error_line(ok + record("x", kFull + R"(, "style": [3])")), 2);
  EXPECT_EQ(error_line(ok + record("b", kFull) + "\n{not json"), 3);
  EXPECT_EQ(error_line(ok + record("x", R"("fluency": [], "relevance": [3], "coherence": [2], "consistency": [5])")), 2);
  EXPECT_EQ(error_line(ok + record("x", R"("fluency": [6], "relevance": [3], "coherence": [2], "consistency": [5])")), 2);
  EXPECT_EQ(error_line(ok + record("x", R"("fluency": ["4"], "relevance": [3], "coherence": [2], "consistency": [5])")), 2);
  EXPECT_EQ(error_line(ok + ok), 2);  // duplicate id
  EXPECT_EQ(error_line(ok + R"({"id": "y", "summary": "s", "annotations": {}})"), 2);
}

TEST(SplitDataset, DefaultSizes) {
  const auto s = split_dataset(numbered(640), default_criteria(), 0);
  EXPECT_EQ(s.train.size(), 120u);
  EXPECT_EQ(s.validation.size(), 40u);
  EXPECT_EQ(s.test.size(), 480u);
}

TEST(SplitDataset, DeterministicAndDisjointForManySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto samples = numbered(700);
    const auto a = split_dataset(samples, default_criteria(), seed);
    std::reverse(samples.begin(), samples.end());  // input order must not matter
    const auto b = split_dataset(samples, default_criteria(), seed);
    EXPECT_EQ(ids(a.train), ids(b.train));
    EXPECT_EQ(ids(a.validation), ids(b.validation));
    EXPECT_EQ(ids(a.test), ids(b.test));
    std::set<std::string> all;
    for (const auto* part : {&a.train, &a.validation, &a.test}) {
      for (const auto& x : *part) EXPECT_TRUE(all.insert(x.id).second) << x.id;
    }
    EXPECT_EQ(all.size(), 640u);
  }
  EXPECT_NE(ids(split_dataset(numbered(640), default_criteria(), 1).test),
            ids(split_dataset(numbered(640), default_criteria(), 2).test));
}

TEST(SplitDataset, ShortfallIsReported) {
  try {
    split_dataset(numbered(600), default_criteria(), 0);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("40"), std::string::npos) << e.what();
  }
}

TEST(SyntheticWorldData, EveryTruthInScale) {
  const auto w = SyntheticWorld::generate(640, 7);
  for (const auto& s : w.samples) {
    ASSERT_EQ(s.truth.size(), 4u);
    for (const auto& [c, v] : s.truth) {
      EXPECT_GE(v, 1.0);
      EXPECT_LE(v, 5.0);
    }
  }
}
