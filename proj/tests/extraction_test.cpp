#include <gtest/gtest.h>

#include <random>
#include <set>

#include "bcr/extraction.hpp"
#include "oracles/brace_oracle.hpp"

using namespace bcr;

namespace {

std::optional<std::string> boxed_after_open(const std::string& text) {
  const auto pos = text.find(kBoxedOpen);
  return extract_boxed(text, pos + kBoxedOpen.size());
}

std::string templated(const std::vector<std::string>& answers) {
  std::string out;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const auto k = std::to_string(i + 1);
    out += "### Problem " + k + "\nSome reasoning with \\frac{a}{b} and {braces}.\nAnswer" + k + ": \\boxed{" +
           answers[i] + "}\n\n";
  }
  return out;
}

}  // namespace

TEST(ExtractBoxed, Examples) {
  EXPECT_EQ(boxed_after_open("\\boxed{42} rest"), "42");
  EXPECT_EQ(boxed_after_open("\\boxed{\\dfrac{1}{5}}"), "\\dfrac{1}{5}");
  EXPECT_EQ(boxed_after_open("\\boxed{a\\}b}"), "a\\}b");
  EXPECT_EQ(boxed_after_open("\\boxed{}"), "");
  EXPECT_EQ(boxed_after_open("\\boxed{{1}{2}"), std::nullopt);
  EXPECT_EQ(boxed_after_open("\\boxed{abc\\"), std::nullopt);
  EXPECT_EQ(extract_boxed("", 0), std::nullopt);
}

TEST(ExtractBoxed, AgreesWithReferenceMatcherOnNoisyText) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20000; ++i) {
    const auto text = oracle::noisy_text(rng, 40);
    for (std::size_t start = 0; start <= text.size(); ++start) {
      ASSERT_EQ(extract_boxed(text, start), oracle::match_from(text, start)) << text << " @" << start;
    }
  }
}

TEST(ExtractBoxed, AgreesWithReferenceMatcherOnNestedContent) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 5000; ++i) {
    const int depth = static_cast<int>(rng() % 6);
    const auto text = "\\boxed{" + oracle::content_with_depth(rng, depth) + "}" + oracle::noisy_text(rng, 10);
    ASSERT_EQ(extract_boxed(text, kBoxedOpen.size()), oracle::match_from(text, kBoxedOpen.size())) << text;
  }
}

TEST(ExtractBoxed, RoundTripWithArbitrarySuffix) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 10000; ++i) {
    const auto content = oracle::balanced_content(rng, 5);
    const auto text = "\\boxed{" + content + "}" + oracle::noisy_text(rng, 20);
    ASSERT_EQ(extract_boxed(text, kBoxedOpen.size()), content) << text;
  }
}

TEST(FindAllBoxed, OutermostNonOverlapping) {
  const auto all = find_all_boxed("x \\boxed{\\boxed{1}} y \\boxed{2}");
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].content, "\\boxed{1}");
  EXPECT_EQ(all[0].position, 2u);
  EXPECT_EQ(all[1].content, "2");
}

TEST(FindAllBoxed, UnterminatedOuterBoxStillYieldsInnerOne) {
  const auto all = find_all_boxed("\\boxed{ \\boxed{3}");
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].content, "3");
  EXPECT_TRUE(find_all_boxed("no boxes here").empty());
}

TEST(ExtractAnswers, SingleSection) {
  const auto set = extract_answers("### Problem 1\nWork.\nAnswer1: \\boxed{117}", 1);
  ASSERT_EQ(set.answers.size(), 1u);
  EXPECT_EQ(set.answers[0], "117");
  EXPECT_EQ(set.stages[0], ExtractionStage::section_match);
  EXPECT_EQ(set.raw_boxed_count, 1u);
}

TEST(ExtractAnswers, PositionalWithoutHeaders) {
  const auto set = extract_answers("first \\boxed{3} then \\boxed{7}", 2);
  EXPECT_EQ(set.answers[0], "3");
  EXPECT_EQ(set.answers[1], "7");
  EXPECT_EQ(set.stages[0], ExtractionStage::positional);
  EXPECT_EQ(set.stages[1], ExtractionStage::positional);
}

TEST(ExtractAnswers, TruncatedLastSlot) {
  auto text = templated({"1", "22"});
  text += "### Problem 3\nreasoning\nAnswer3: \\boxed{\\frac{1}{";
  const auto set = extract_answers(text, 3);
  EXPECT_EQ(set.answers[0], "1");
  EXPECT_EQ(set.answers[1], "22");
  EXPECT_FALSE(set.answers[2].has_value());
  EXPECT_EQ(set.stages[2], ExtractionStage::none);
  EXPECT_EQ(set.filled(), 2u);
}

TEST(ExtractAnswers, GlobalMatchWhenMarkerIsOutsideItsSection) {
  const std::string text =
      "### Problem 1\nAnswer1: \\boxed{5}\nAnswer2: \\boxed{6}\n### Problem 2\nforgot it here\n";
  const auto set = extract_answers(text, 2);
  EXPECT_EQ(set.answers[0], "5");
  EXPECT_EQ(set.stages[0], ExtractionStage::section_match);
  EXPECT_EQ(set.answers[1], "6");
  EXPECT_EQ(set.stages[1], ExtractionStage::global_match);
}

TEST(ExtractAnswers, AnswersWithoutHeadersUseGlobalMatch) {
  const auto set = extract_answers("Answer2: \\boxed{b} Answer1: \\boxed{a}", 2);
  EXPECT_EQ(set.answers[0], "a");
  EXPECT_EQ(set.answers[1], "b");
  EXPECT_EQ(set.stages[0], ExtractionStage::global_match);
  EXPECT_EQ(set.stages[1], ExtractionStage::global_match);
}

TEST(ExtractAnswers, PositionalSkipsOccurrencesAlreadyClaimed) {
  // Slot 1's marker owns the first box; slot 2 would positionally take the
  // second one, slot 1's box must not be reused for anything.
  const auto set = extract_answers("\\boxed{9} Answer2: \\boxed{4}", 2);
  EXPECT_EQ(set.answers[1], "4");
  EXPECT_EQ(set.stages[1], ExtractionStage::global_match);
  EXPECT_EQ(set.answers[0], "9");
  EXPECT_EQ(set.stages[0], ExtractionStage::positional);

  const auto second = extract_answers("Answer1: \\boxed{9} filler", 2);
  EXPECT_EQ(second.answers[0], "9");
  EXPECT_FALSE(second.answers[1].has_value());
}

TEST(ExtractAnswers, HeaderSpacingTolerated) {
  const auto set = extract_answers("  ###Problem 1\nAnswer1:\\boxed{x}\n###   Problem 2\nAnswer2: \\boxed{y}", 2);
  EXPECT_EQ(set.stages[0], ExtractionStage::section_match);
  EXPECT_EQ(set.stages[1], ExtractionStage::section_match);
  EXPECT_EQ(set.answers[0], "x");
  EXPECT_EQ(set.answers[1], "y");
}

TEST(ExtractAnswers, StrictAndLenientMarkers) {
  const std::string text = "### Problem 1\nanswer 1:   \\boxed{12}\n";
  const auto strict = extract_answers(text, 1);
  EXPECT_EQ(strict.stages[0], ExtractionStage::positional);
  const auto lenient = extract_answers(text, 1, {true});
  EXPECT_EQ(lenient.stages[0], ExtractionStage::section_match);
  EXPECT_EQ(lenient.answers[0], "12");
}

TEST(ExtractAnswers, MarkerNumberMustMatchExactly) {
  // "Answer1" must not match inside "Answer12".
  std::vector<std::string> answers;
  for (int i = 1; i <= 12; ++i) answers.push_back("v" + std::to_string(i));
  const auto set = extract_answers(templated(answers), 12);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(set.answers[i], answers[i]);
    EXPECT_EQ(set.stages[i], ExtractionStage::section_match);
  }
  const auto only12 = extract_answers("Answer12: \\boxed{z}", 1);
  EXPECT_EQ(only12.stages[0], ExtractionStage::positional);
}

TEST(ExtractAnswers, NothingToExtract) {
  const auto set = extract_answers("I give up.", 3);
  EXPECT_EQ(set.filled(), 0u);
  for (auto s : set.stages) EXPECT_EQ(s, ExtractionStage::none);
}

TEST(ExtractAnswers, StagesAndAnswersAgree) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 3000; ++i) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<std::string> answers;
    for (std::size_t k = 0; k < n; ++k) answers.push_back(oracle::balanced_content(rng, 3));
    auto text = templated(answers);
    text = text.substr(0, rng() % (text.size() + 1));
    const auto set = extract_answers(text, n);
    ASSERT_EQ(set.answers.size(), n);
    ASSERT_EQ(set.stages.size(), n);
    for (std::size_t k = 0; k < n; ++k) {
      ASSERT_EQ(set.answers[k].has_value(), set.stages[k] != ExtractionStage::none);
    }
  }
}

TEST(ExtractAnswers, TrailingTextDoesNotChangeResult) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<std::string> answers;
    for (std::size_t k = 0; k < n; ++k) answers.push_back(oracle::balanced_content(rng, 4));
    const auto text = templated(answers);
    const auto base = extract_answers(text, n);
    // Trailing text without markers, headers or boxes.
    std::string tail;
    for (std::size_t k = rng() % 30; k > 0; --k) tail += "xyz {}\\ 1."[rng() % 10];
    const auto extended = extract_answers(text + tail, n);
    ASSERT_EQ(extended.answers, base.answers);
    ASSERT_EQ(extended.stages, base.stages);
    for (std::size_t k = 0; k < n; ++k) ASSERT_EQ(base.answers[k], answers[k]);
  }
}

TEST(ExtractAnswers, PositionalNeverAssignsOneBoxTwice) {
  std::mt19937_64 rng(23);
  static const std::vector<std::string> pieces{"\\boxed{1}", "\\boxed{2}", "Answer1: \\boxed{a}", "Answer2: ",
                                               "### Problem 1\n", "### Problem 2\n", "Answer3: \\boxed{c}", " text ",
                                               "\\boxed{\\boxed{n}}", "\\boxed{"};
  for (int i = 0; i < 5000; ++i) {
    std::string text;
    for (std::size_t k = rng() % 10; k > 0; --k) text += pieces[rng() % pieces.size()];
    const std::size_t n = 1 + rng() % 4;
    const auto set = extract_answers(text, n);
    const auto boxes = find_all_boxed(text);
    std::set<std::size_t> positional_indices;
    for (std::size_t k = 0; k < n; ++k) {
      if (set.stages[k] != ExtractionStage::positional) continue;
      ASSERT_LT(k, boxes.size());
      ASSERT_EQ(set.answers[k], boxes[k].content);
      ASSERT_TRUE(positional_indices.insert(k).second);
    }
    ASSERT_EQ(set.raw_boxed_count, boxes.size());
  }
}

TEST(ExtractAnswers, JsonShape) {
  const auto j = to_json(extract_answers("Answer1: \\boxed{4}", 2));
  EXPECT_EQ(j["answers"][0], "4");
  EXPECT_TRUE(j["answers"][1].is_null());
  EXPECT_EQ(j["stages"][0], "global_match");
  EXPECT_EQ(j["stages"][1], "none");
  EXPECT_EQ(stage_from_string("positional"), ExtractionStage::positional);
}
