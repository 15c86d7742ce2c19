#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "bcr/grouping.hpp"
#include "oracles/budget_oracle.hpp"

using namespace bcr;

namespace {

Corpus scored_corpus(std::size_t m, const std::vector<double>& difficulties = {}) {
  Corpus c;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = difficulties.empty() ? static_cast<double>(i + 1) : difficulties[i];
    c.problems.push_back(Problem{"q" + std::to_string(i), "statement " + std::to_string(i), std::to_string(i), d});
  }
  return c;
}

}  // namespace

TEST(SelectBudget, DirectFormulaWithUnitGranularity) {
  const std::vector<double> lengths{1000.0};
  EXPECT_EQ(select_budget(lengths, 2, {0.5, 1}), 1000);
}

TEST(SelectBudget, DefaultBudgetForThreeProblems) {
  const std::vector<double> lengths{3413.33, 3413.33, 3413.34};
  EXPECT_EQ(select_budget(lengths, 3, {0.5, 512}), 5120);
  const std::vector<double> lower{3300.0};
  EXPECT_EQ(select_budget(lower, 3, {0.5, 512}), 5120);
}

TEST(SelectBudget, RoundingMatchesEnumerationOracle) {
  // Every half-token value of the raw budget in [4864, 5120], including the
  // tie at 4864 between 4608 and 5120.
  for (std::int64_t twice = 2 * 4864; twice <= 2 * 5120; ++twice) {
    const std::vector<double> lengths{static_cast<double>(twice) / 2.0};
    const auto expected = oracle::nearest_multiple(twice, 2, 512);
    ASSERT_EQ(select_budget(lengths, 1, {1.0, 512}), expected) << "raw " << twice / 2.0;
  }
  EXPECT_EQ(select_budget(std::vector<double>{4864.0}, 1, {1.0, 512}), 5120);
  EXPECT_EQ(select_budget(std::vector<double>{4863.5}, 1, {1.0, 512}), 4608);
}

TEST(SelectBudget, RoundingOracleOverGranularities) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t g = 1 + static_cast<std::int64_t>(rng() % 700);
    const std::int64_t raw = g + static_cast<std::int64_t>(rng() % 40000);
    const std::vector<double> lengths{static_cast<double>(raw)};
    ASSERT_EQ(select_budget(lengths, 1, {1.0, g}), oracle::nearest_multiple(raw, 1, g)) << raw << " " << g;
  }
}

TEST(SelectBudget, NeverBelowOneGranule) {
  EXPECT_EQ(select_budget(std::vector<double>{1.0}, 1, {0.1, 512}), 512);
}

TEST(SelectBudget, Errors) {
  EXPECT_THROW(select_budget(std::vector<double>{}, 3, {}), EmptyProbeSet);
  EXPECT_THROW(select_budget(std::vector<double>{10.0}, 3, {0.0, 512}), ConfigError);
  EXPECT_THROW(select_budget(std::vector<double>{10.0}, 3, {1.5, 512}), ConfigError);
  EXPECT_THROW(select_budget(std::vector<double>{10.0}, 3, {0.5, 0}), ConfigError);
}

TEST(SelectBudget, MonotoneInEachArgument) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> len(50.0, 8000.0), lam(0.05, 1.0);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 1 + rng() % 8;
    const double l = len(rng), lambda = lam(rng);
    const std::int64_t g = std::int64_t{1} << (rng() % 10);
    const auto base = select_budget(std::vector<double>{l}, n, {lambda, g});
    EXPECT_LE(base, select_budget(std::vector<double>{l}, n + 1, {lambda, g}));
    EXPECT_LE(base, select_budget(std::vector<double>{l * 1.1}, n, {lambda, g}));
    EXPECT_LE(base, select_budget(std::vector<double>{l}, n, {std::min(1.0, lambda * 1.1), g}));
  }
}

TEST(BuildGroups, OnePerTercile) {
  const auto corpus = scored_corpus(9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = build_groups(corpus, {3, seed, 0, true}, 1024);
    ASSERT_EQ(r.groups.size(), 3u);
    EXPECT_TRUE(r.leftovers.empty());
    for (const auto& g : r.groups) {
      std::set<int> terciles;
      for (const auto& m : g.members) terciles.insert(static_cast<int>((*m.difficulty - 1) / 3));
      EXPECT_EQ(terciles, (std::set<int>{0, 1, 2}));
    }
  }
}

TEST(BuildGroups, LeftoversAreReported) {
  const auto r = build_groups(scored_corpus(10), {3, 4, 0, true}, 1024);
  EXPECT_EQ(r.groups.size(), 3u);
  ASSERT_EQ(r.leftovers.size(), 1u);
}

TEST(BuildGroups, Errors) {
  auto corpus = scored_corpus(6);
  corpus.problems[4].difficulty.reset();
  try {
    build_groups(corpus, {3, 0, 0, true}, 100);
    FAIL();
  } catch (const MissingDifficulty& e) {
    EXPECT_EQ(e.id(), "q4");
  }
  EXPECT_THROW(build_groups(scored_corpus(2), {3, 0, 0, true}, 100), CorpusTooSmall);
  EXPECT_THROW(build_groups(scored_corpus(6), {0, 0, 0, true}, 100), ConfigError);
  EXPECT_THROW(build_groups(scored_corpus(6), {3, 0, 0, true}, 0), ConfigError);
}

TEST(BuildGroups, MembersAndLeftoversPartitionTheCorpus) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng() % 60;
    const std::size_t n = 1 + rng() % std::min<std::size_t>(m, 7);
    std::vector<double> d(m);
    for (auto& x : d) x = static_cast<double>(rng() % 50);
    const auto corpus = scored_corpus(m, d);
    const auto r = build_groups(corpus, {n, rng(), 1 + rng() % 4, rng() % 2 == 0}, 512);
    std::multiset<std::string> seen;
    for (const auto& g : r.groups) {
      ASSERT_EQ(g.members.size(), n);
      ASSERT_EQ(count_section_markers(g.prompt), n);
      ASSERT_GT(g.budget, 0);
      for (const auto& p : g.members) seen.insert(p.id);
    }
    for (const auto& p : r.leftovers) seen.insert(p.id);
    std::multiset<std::string> all;
    for (const auto& p : corpus.problems) all.insert(p.id);
    ASSERT_EQ(seen, all);
    ASSERT_EQ(r.groups.size(), m / n);
  }
}

TEST(BuildGroups, StratifiedSpreadNoWorseThanRandomGrouping) {
  // Paired comparison against single-stratum grouping over 100 seeds. A
  // sign test: 70 or more wins out of 100 has p < 1e-4 under a fair coin.
  const auto compare = [](const std::vector<double>& d) {
    const auto corpus = scored_corpus(d.size(), d);
    int no_worse = 0;
    double strat_total = 0.0, random_total = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const double strat = build_groups(corpus, {3, seed, 0, true}, 512).max_mean_deviation;
      const double random = build_groups(corpus, {3, seed, 1, true}, 512).max_mean_deviation;
      no_worse += strat <= random;
      strat_total += strat;
      random_total += random;
    }
    EXPECT_GE(no_worse, 70);
    EXPECT_LT(strat_total, random_total);
  };
  std::mt19937_64 rng(8);
  std::exponential_distribution<double> expo(1.0 / 400.0);
  std::uniform_real_distribution<double> flat(100.0, 4000.0);
  std::vector<double> skewed(300), uniform(300);
  for (auto& x : skewed) x = expo(rng);
  for (auto& x : uniform) x = flat(rng);
  compare(skewed);
  compare(uniform);
}

TEST(BuildGroups, WithinGroupOrderIsShuffled) {
  // Position of the easiest-stratum member should be roughly uniform.
  const auto corpus = scored_corpus(30);
  std::map<std::size_t, int> position_counts;
  int total = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    for (const auto& g : build_groups(corpus, {3, seed, 0, true}, 512).groups) {
      for (std::size_t i = 0; i < 3; ++i) {
        if (*g.members[i].difficulty <= 10) ++position_counts[i];
      }
      ++total;
    }
  }
  double chi2 = 0.0;
  const double expected = total / 3.0;
  for (std::size_t i = 0; i < 3; ++i) chi2 += std::pow(position_counts[i] - expected, 2) / expected;
  EXPECT_LT(chi2, 13.8);  // chi-square, 2 dof, p = 0.001

  for (const auto& g : build_groups(corpus, {3, 1, 0, false}, 512).groups) {
    EXPECT_LT(*g.members[0].difficulty, *g.members[1].difficulty);
    EXPECT_LT(*g.members[1].difficulty, *g.members[2].difficulty);
  }
}

TEST(BuildGroups, SameSeedSameGroups) {
  const auto corpus = scored_corpus(31);
  const auto a = build_groups(corpus, {4, 77, 0, true}, 640);
  const auto b = build_groups(corpus, {4, 77, 0, true}, 640);
  ASSERT_EQ(a.groups.size(), b.groups.size());
  for (std::size_t k = 0; k < a.groups.size(); ++k) {
    EXPECT_EQ(a.groups[k].prompt, b.groups[k].prompt);
    EXPECT_EQ(a.groups[k].group_id, b.groups[k].group_id);
  }
  EXPECT_EQ(a.leftovers, b.leftovers);
}

TEST(RenderPrompt, SingleProblem) {
  ProblemGroup g;
  g.members = {Problem{"a", "2+2?", "4", 1.0}};
  const auto prompt = render_prompt(g);
  EXPECT_EQ(count_section_markers(prompt), 1u);
  EXPECT_NE(prompt.find("### Problem 1\n2+2?\n"), std::string::npos);
  EXPECT_NE(prompt.find("   After Problem 1: Answer1: \\boxed{...}\n"), std::string::npos);
  EXPECT_EQ(prompt.find("Answer2"), std::string::npos);
}

TEST(RenderPrompt, ThreeProblemsInMemberOrder) {
  ProblemGroup g;
  g.members = {Problem{"a", "first", "1", 1.0}, Problem{"b", "second", "2", 1.0}, Problem{"c", "third", "3", 1.0}};
  const auto prompt = render_prompt(g);
  const auto p1 = prompt.find("### Problem 1\nfirst");
  const auto p2 = prompt.find("### Problem 2\nsecond");
  const auto p3 = prompt.find("### Problem 3\nthird");
  ASSERT_NE(p1, std::string::npos);
  ASSERT_NE(p2, std::string::npos);
  ASSERT_NE(p3, std::string::npos);
  EXPECT_LT(p1, p2);
  EXPECT_LT(p2, p3);
  EXPECT_EQ(count_section_markers(prompt), 3u);
  EXPECT_EQ(prompt, render_prompt(g));
  EXPECT_EQ(prompt.rfind("[system]\nYou are an expert mathematics tutor.\n", 0), 0u);
  for (int i = 1; i <= 3; ++i) {
    const std::string line = "After Problem " + std::to_string(i) + ": Answer" + std::to_string(i) + ": \\boxed{...}";
    EXPECT_NE(prompt.find(line), std::string::npos) << line;
  }
  EXPECT_EQ(parse_prompt_statements(prompt), (std::vector<std::string>{"first", "second", "third"}));
}

TEST(RenderPrompt, MultilineStatementsRoundTrip) {
  ProblemGroup g;
  g.members = {Problem{"a", "line one\nline two", "1", 1.0}, Problem{"b", "$x^2$ = 4", "2", 1.0}};
  EXPECT_EQ(parse_prompt_statements(render_prompt(g)),
            (std::vector<std::string>{"line one\nline two", "$x^2$ = 4"}));
}

TEST(GroupJson, RoundTrip) {
  const auto r = build_groups(scored_corpus(6), {3, 2, 0, true}, 777);
  for (const auto& g : r.groups) {
    const auto back = group_from_json(to_json(g));
    EXPECT_EQ(back.group_id, g.group_id);
    EXPECT_EQ(back.prompt, g.prompt);
    EXPECT_EQ(back.budget, 777);
    ASSERT_EQ(back.members.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(back.members[i].id, g.members[i].id);
      EXPECT_EQ(back.members[i].answer, g.members[i].answer);
      EXPECT_EQ(back.members[i].statement, g.members[i].statement);
    }
  }
  EXPECT_THROW(group_from_json(nlohmann::json{{"group_id", "x"}}), MalformedRecord);
}
