#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <random>

#include "bcr/sim_env.hpp"
#include "oracles/expr_oracle.hpp"
#include "sim_support.hpp"

using namespace bcr;

namespace {

const std::array<std::string, kClassCount> kStatements{"Evaluate 1 + 2", "Evaluate 1 + 2 + 3 + 4",
                                                       "Evaluate 1 + 2 + 3 + 4 + 5 + 6"};
const std::array<std::string, kClassCount> kAnswers{"3", "10", "21"};

SimConfig four_level_config() {
  SimConfig c;
  c.verbosity_levels = {40, 100, 200, 400};
  c.thresholds = {80, 150, 300};
  c.initial_logits = {std::vector<double>{0.0, 0.5, 1.0, 1.5}, std::vector<double>{0.0, 0.5, 1.0, 1.5},
                      std::vector<double>{0.0, 0.5, 1.0, 1.5}};
  return c;
}

ProblemGroup group_of_classes(const std::vector<std::size_t>& classes, std::int64_t budget) {
  ProblemGroup g;
  g.group_id = "g";
  for (std::size_t i = 0; i < classes.size(); ++i) {
    g.members.push_back(Problem{"p" + std::to_string(i), kStatements[classes[i]], kAnswers[classes[i]], 1.0});
  }
  g.prompt = render_prompt(g);
  g.budget = budget;
  return g;
}

ToyPolicy one_hot(const SimConfig& cfg, const std::array<std::size_t, kClassCount>& level_of_class) {
  ToyPolicy::Logits l(kClassCount, std::vector<double>(cfg.verbosity_levels.size(), -1e6));
  for (std::size_t c = 0; c < kClassCount; ++c) l[c][level_of_class[c]] = 0.0;
  return ToyPolicy(cfg, l, l);
}

// Rule-by-rule reward of one realized level sequence, written out directly.
ExpectedOutcome realized(const SimConfig& cfg, const std::vector<std::size_t>& classes,
                         const std::vector<std::size_t>& picks, std::int64_t budget, std::int64_t max_len) {
  ExpectedOutcome o;
  std::int64_t used = 0;
  std::size_t correct = 0;
  bool truncated = false;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto level = cfg.verbosity_levels[picks[i]];
    if (used + level > budget) {
      truncated = true;
      break;
    }
    used += level;
    correct += level >= cfg.thresholds[classes[i]];
  }
  o.r_acc = static_cast<double>(correct) / static_cast<double>(classes.size());
  o.r_fmt = truncated ? 0.0 : 1.0;
  o.r_len = -std::min(1.0, static_cast<double>(used) / static_cast<double>(max_len));
  o.tokens = static_cast<double>(used);
  return o;
}

// Sum over all m^n level sequences of probability times realized outcome.
ExpectedOutcome enumerate(const SimConfig& cfg, const ToyPolicy& policy, const std::vector<std::size_t>& classes,
                          std::int64_t budget, std::int64_t max_len) {
  const std::size_t m = cfg.verbosity_levels.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < classes.size(); ++i) total *= m;
  ExpectedOutcome sum;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<std::size_t> picks;
    double prob = 1.0;
    for (std::size_t i = 0, rest = code; i < classes.size(); ++i, rest /= m) {
      picks.push_back(rest % m);
      prob *= policy.probabilities(classes[i])[rest % m];
    }
    const auto o = realized(cfg, classes, picks, budget, max_len);
    sum.r_acc += prob * o.r_acc;
    sum.r_fmt += prob * o.r_fmt;
    sum.r_len += prob * o.r_len;
    sum.tokens += prob * o.tokens;
  }
  return sum;
}

double moving_average_violation(const std::vector<double>& series, std::size_t window) {
  double worst = 0.0, prev = 0.0;
  for (std::size_t end = window; end <= series.size(); ++end) {
    double sum = 0.0;
    for (std::size_t i = end - window; i < end; ++i) sum += series[i];
    const double ma = sum / static_cast<double>(window);
    if (end > window) worst = std::max(worst, prev - ma);
    prev = ma;
  }
  return worst;
}

}  // namespace

TEST(GenerateCorpus, ClassProportions) {
  const auto problems = generate_synth_problems(9, 1, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  std::array<int, kClassCount> counts{};
  for (const auto& p : problems) ++counts[static_cast<std::size_t>(p.difficulty_class)];
  EXPECT_EQ(counts, (std::array<int, kClassCount>{3, 3, 3}));
  for (const auto& p : generate_synth_problems(20, 2, {1.0, 0.0, 0.0})) {
    EXPECT_EQ(p.difficulty_class, DifficultyClass::easy);
  }
  const auto uneven = generate_synth_problems(10, 3, {0.25, 0.25, 0.5});
  std::array<int, kClassCount> c2{};
  for (const auto& p : uneven) ++c2[static_cast<std::size_t>(p.difficulty_class)];
  EXPECT_EQ(c2[2], 5);
  EXPECT_EQ(c2[0] + c2[1], 5);
}

TEST(GenerateCorpus, DeterministicUnderSeed) {
  const auto a = generate_corpus(50, 7, {0.2, 0.3, 0.5});
  const auto b = generate_corpus(50, 7, {0.2, 0.3, 0.5});
  const auto c = generate_corpus(50, 8, {0.2, 0.3, 0.5});
  EXPECT_EQ(a.problems, b.problems);
  EXPECT_NE(a.problems, c.problems);
  EXPECT_NO_THROW(validate(a));
}

TEST(GenerateCorpus, BadMix) {
  EXPECT_THROW(generate_corpus(10, 0, {0.5, 0.5, 0.5}), BadMix);
  EXPECT_THROW(generate_corpus(10, 0, {1.5, -0.5, 0.0}), BadMix);
  EXPECT_THROW(generate_corpus(10, 0, {1.0, std::nan(""), 0.0}), BadMix);
  EXPECT_NO_THROW(generate_corpus(10, 0, {0.1, 0.2, 0.7}));
}

TEST(GenerateCorpus, AnswersMatchIndependentEvaluator) {
  const auto problems = generate_synth_problems(3000, 11, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const SimConfig cfg;
  for (const auto& p : problems) {
    const std::string expr(statement_expression(p.statement));
    ASSERT_EQ(p.answer, oracle::format(oracle::evaluate(expr))) << expr;
    const auto cls = static_cast<std::size_t>(p.difficulty_class);
    ASSERT_EQ(count_operands(p.statement), cfg.operand_counts[cls]);
    ASSERT_EQ(p.min_tokens_for_correct, cfg.thresholds[cls]);
  }
}

TEST(Expressions, Examples) {
  EXPECT_EQ(format_rational(*evaluate_expression("1 + 2 * 3")), "7");
  EXPECT_EQ(format_rational(*evaluate_expression("7 / 2")), "7/2");
  EXPECT_EQ(format_rational(*evaluate_expression("2 - 9 / 3 * 4")), "-10");
  EXPECT_EQ(format_rational(*evaluate_expression("12 / 8 / 3")), "1/2");
  EXPECT_FALSE(evaluate_expression("3 / 0").has_value());
  EXPECT_FALSE(evaluate_expression("3 +").has_value());
  EXPECT_FALSE(evaluate_expression("").has_value());
}

TEST(ToyPolicy, ReferenceAndKl) {
  ToyPolicy policy;
  EXPECT_EQ(policy.kl_to_reference(), 0.0);
  const auto ref = policy.reference_logits();
  PolicySignal s;
  s.weighted_traces.push_back({{Action{1, 0}}, 1.0});
  s.kl_coefficient = 0.5;
  policy.apply_update(s, 1.0);
  EXPECT_EQ(policy.reference_logits(), ref);
  EXPECT_GT(policy.kl_to_reference(), 0.0);
  double total = 0.0;
  for (double p : policy.probabilities(1)) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
  const auto back = ToyPolicy::from_json(SimConfig{}, policy.to_json());
  EXPECT_EQ(back.logits(), policy.logits());
  EXPECT_EQ(back.reference_logits(), ref);
  EXPECT_THROW(ToyPolicy::from_json(SimConfig{}, nlohmann::json{{"logits", 1}}), ConfigError);
}

TEST(ToyPolicy, LogProbIsLogSoftmax) {
  ToyPolicy policy;
  const ActionTrace trace{{0, 4}, {2, 1}, {1, 3}};
  double expected = 0.0;
  for (const auto& a : trace) {
    expected += std::log(policy.probabilities(static_cast<std::size_t>(a.context))[static_cast<std::size_t>(a.choice)]);
  }
  EXPECT_NEAR(policy.log_prob(trace), expected, 1e-12);
}

TEST(ToyPolicy, ClassifiesByOperandCount) {
  ToyPolicy policy;
  EXPECT_EQ(policy.classify(kStatements[0]), 0u);
  EXPECT_EQ(policy.classify(kStatements[1]), 1u);
  EXPECT_EQ(policy.classify(kStatements[2]), 2u);
  EXPECT_EQ(policy.classify("Evaluate 1 + 2 + 3 + 4 + 5 + 6 + 7 + 8"), 2u);
}

TEST(SimulateCompletion, FitsExactly) {
  const auto cfg = four_level_config();
  const auto policy = one_hot(cfg, {1, 1, 1});
  const auto g = group_of_classes({0, 0, 0}, 300);
  const auto c = simulate_completion(policy, g, 5);
  EXPECT_EQ(c.tokens, 300);
  const auto r = total_reward(c.text, c.tokens, g, {2, 1, 0}, 300);
  EXPECT_DOUBLE_EQ(r.r_acc, 1.0);
  EXPECT_DOUBLE_EQ(r.r_fmt, 1.0);
}

TEST(SimulateCompletion, LastProblemTruncated) {
  const auto cfg = four_level_config();
  const auto policy = one_hot(cfg, {1, 1, 1});
  const auto g = group_of_classes({0, 0, 0}, 250);
  const auto c = simulate_completion(policy, g, 5);
  EXPECT_EQ(c.tokens, 200);
  EXPECT_EQ(c.trace.size(), 3u);
  const auto r = total_reward(c.text, c.tokens, g, {2, 1, 0}, 250);
  EXPECT_DOUBLE_EQ(r.r_acc, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.r_fmt, 0.0);
  EXPECT_EQ(r.stages[2], ExtractionStage::none);
}

TEST(SimulateCompletion, BelowThresholdGivesWrongAnswer) {
  const auto cfg = four_level_config();
  const auto policy = one_hot(cfg, {0, 1, 1});
  const auto g = group_of_classes({0}, 300);
  const auto c = simulate_completion(policy, g, 5);
  EXPECT_EQ(c.tokens, 40);
  const auto set = extract_answers(c.text, 1);
  ASSERT_TRUE(set.answers[0].has_value());
  EXPECT_FALSE(verify(*set.answers[0], "3"));
  EXPECT_EQ(set.stages[0], ExtractionStage::section_match);
}

TEST(SimulateCompletion, BudgetAndConservation) {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> z(0.0, 1.5);
  const SimConfig cfg;
  for (int i = 0; i < 3000; ++i) {
    ToyPolicy::Logits l(kClassCount, std::vector<double>(cfg.verbosity_levels.size()));
    for (auto& row : l) for (auto& x : row) x = z(rng);
    const ToyPolicy policy(cfg, l, l);
    std::vector<std::size_t> classes(1 + rng() % 6);
    for (auto& c : classes) c = rng() % kClassCount;
    const auto budget = static_cast<std::int64_t>(1 + rng() % 2500);
    const auto g = group_of_classes(classes, budget);
    const auto c = simulate_completion(policy, g, rng());
    ASSERT_LE(c.tokens, budget);
    const auto answered = extract_answers(c.text, classes.size()).filled();
    std::int64_t spent = 0;
    for (std::size_t k = 0; k < answered; ++k) spent += cfg.verbosity_levels[static_cast<std::size_t>(c.trace[k].choice)];
    ASSERT_EQ(c.tokens, spent);
    if (answered < classes.size()) {
      ASSERT_EQ(c.trace.size(), answered + 1);
      ASSERT_GT(spent + cfg.verbosity_levels[static_cast<std::size_t>(c.trace.back().choice)], budget);
    } else {
      ASSERT_EQ(c.trace.size(), classes.size());
    }
  }
}

TEST(ExpectedOutcome, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(62);
  std::normal_distribution<double> z(0.0, 1.0);
  const auto cfg = four_level_config();
  for (int trial = 0; trial < 300; ++trial) {
    ToyPolicy::Logits l(kClassCount, std::vector<double>(4));
    for (auto& row : l) for (auto& x : row) x = 2.0 * z(rng);
    const ToyPolicy policy(cfg, l, l);
    std::vector<std::size_t> classes(1 + rng() % 3);
    for (auto& c : classes) c = rng() % kClassCount;
    const auto budget = static_cast<std::int64_t>(40 + rng() % 1300);
    const auto max_len = static_cast<std::int64_t>(100 + rng() % 1200);
    const auto e = expected_outcome(policy, classes, budget, max_len);
    const auto o = enumerate(cfg, policy, classes, budget, max_len);
    ASSERT_NEAR(e.r_acc, o.r_acc, 1e-9);
    ASSERT_NEAR(e.r_fmt, o.r_fmt, 1e-9);
    ASSERT_NEAR(e.r_len, o.r_len, 1e-9);
    ASSERT_NEAR(e.tokens, o.tokens, 1e-9 * std::max(1.0, o.tokens));
  }
}

TEST(ExpectedOutcome, MatchesTextPipelineOverAllOutcomes) {
  // Groups with distinct classes: every level sequence is produced by a
  // one-hot policy, sampled as text and scored through extraction,
  // verification and the reward.
  std::mt19937_64 rng(63);
  std::normal_distribution<double> z(0.0, 1.0);
  const auto cfg = four_level_config();
  const std::vector<std::vector<std::size_t>> groups{{0}, {2}, {1, 0}, {2, 1}, {0, 1, 2}, {2, 0, 1}, {1, 2, 0}};
  const RewardWeights w{2, 1, 1};
  for (int trial = 0; trial < 40; ++trial) {
    ToyPolicy::Logits l(kClassCount, std::vector<double>(4));
    for (auto& row : l) for (auto& x : row) x = 2.0 * z(rng);
    const ToyPolicy policy(cfg, l, l);
    const auto budget = static_cast<std::int64_t>(40 + rng() % 1000);
    const std::int64_t max_len = 1000;
    for (const auto& classes : groups) {
      const auto g = group_of_classes(classes, budget);
      double expected_total = 0.0;
      for (std::size_t code = 0; code < 64; ++code) {
        std::array<std::size_t, kClassCount> pick{code % 4, (code / 4) % 4, code / 16};
        double prob = 1.0;
        for (std::size_t c : classes) prob *= policy.probabilities(c)[pick[c]];
        bool used_all = true;
        for (std::size_t c = 0; c < kClassCount; ++c) {
          if (std::find(classes.begin(), classes.end(), c) == classes.end() && pick[c] != 0) used_all = false;
        }
        if (!used_all) continue;  // count each sequence once
        const auto sample = simulate_completion(one_hot(cfg, pick), g, 1);
        expected_total += prob * total_reward(sample.text, sample.tokens, g, w, max_len).total;
      }
      ASSERT_NEAR(expected_outcome(policy, classes, budget, max_len).total(w), expected_total, 1e-9);
    }
  }
}

TEST(BruteForceOptimum, DefaultEnvironment) {
  const SimConfig cfg;
  const std::vector<std::vector<std::size_t>> seqs{{0, 1, 2}, {2, 1, 0}, {1, 0, 2}};
  const auto best = brute_force_optimum(cfg, seqs, 800, 800, {2, 1, 0});
  // Thresholds 64/160/320 sum to 544 and fit in 800.
  EXPECT_EQ(best.level_of_class, (std::array<std::size_t, kClassCount>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(best.reward, 3.0);
}

TEST(RunTraining, ZeroStepsLogsOnlyInitialization) {
  SimConfig env;
  env.seed = 4;
  TrainConfig train;
  train.steps = 0;
  const auto log = run_bcr_training(env, train, arm_weights("implicit"), "implicit");
  ASSERT_EQ(log.rows.size(), 1u);
  EXPECT_EQ(log.rows[0].step, 0u);
  EXPECT_EQ(log.rows[0].arm, "implicit");
  EXPECT_EQ(log.budget % 32, 0);
  EXPECT_EQ(log.groups.size(), 100u);
  EXPECT_EQ(log.policy.logits(), ToyPolicy(env).logits());
}

TEST(RunTraining, Deterministic) {
  SimConfig env;
  env.seed = 9;
  TrainConfig train;
  train.steps = 60;
  train.seed = 9;
  const auto a = run_bcr_training(env, train, arm_weights("implicit"));
  const auto b = run_bcr_training(env, train, arm_weights("implicit"));
  ASSERT_EQ(a.rows.size(), 61u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(to_json(a.rows[i]), to_json(b.rows[i]));
  EXPECT_EQ(a.policy.logits(), b.policy.logits());
}

TEST(RunTraining, UnknownArm) { EXPECT_THROW(arm_weights("penalty-999"), ConfigError); }

TEST(RunTraining, ExpectedObjectiveMovingAverageNonDecreasing) {
  for (std::uint64_t seed : {1, 2, 3}) {
    SimConfig env;
    env.seed = seed;
    TrainConfig train;
    train.seed = seed;
    const auto log = run_bcr_training(env, train, arm_weights("implicit"), "implicit");
    std::vector<double> objective;
    for (const auto& row : log.rows) objective.push_back(*row.expected_objective);
    EXPECT_LE(moving_average_violation(objective, 200), 1e-12) << "seed " << seed;
  }
}

TEST(RunTraining, ImplicitArmCompressesWithoutLosingAccuracy) {
  SimConfig env;
  env.seed = 1;
  TrainConfig train;
  train.seed = 1;
  // Snapshot every policy; the groups are only known from the final log.
  std::vector<ToyPolicy> snapshots;
  const auto log = run_bcr_training(env, train, arm_weights("implicit"), "implicit",
                                    [&](std::size_t, const ToyPolicy& p, std::int64_t) { snapshots.push_back(p); });
  std::vector<double> accuracy;
  for (const auto& p : snapshots) {
    accuracy.push_back(100.0 * expected_outcome(p, log.group_classes, log.budget, log.budget).r_acc);
  }
  const double initial_verbosity = mean_verbosity(snapshots.front(), log.class_share);
  const double final_verbosity = mean_verbosity(log.policy, log.class_share);
  EXPECT_LT(final_verbosity, initial_verbosity);
  EXPECT_GE(accuracy.back(), *std::max_element(accuracy.begin(), accuracy.end()) - 5.0);
}

TEST(RunTraining, PenaltyArmAccuracyCollapses) {
  SimConfig env;
  env.seed = 1;
  TrainConfig train;
  train.seed = 1;
  const auto weights = arm_weights("penalty-211");
  const auto log = run_bcr_training(env, train, weights, "penalty-211");
  const auto best = brute_force_optimum(env, log.group_classes, log.budget, log.budget, weights);
  const auto final = expected_outcome(log.policy, log.group_classes, log.budget, log.budget);
  EXPECT_LT(final.r_acc, 0.1 * best.outcome.r_acc);
  EXPECT_GE(final.r_len, -0.05);
}

TEST(TaskScaling, FixedCapTokensPerProblemNonIncreasing) {
  SimConfig env;
  env.seed = 1;
  TrainConfig train;
  train.seed = 1;
  const auto log = run_bcr_training(env, train, arm_weights("implicit"));
  const auto corpus = generate_corpus(600, 1001, env.class_mix, env);
  const auto points =
      testing_support::task_scaling(log.policy, corpus, 5, 1, [&](std::size_t) { return log.budget; });
  EXPECT_TRUE(testing_support::tokens_non_increasing(points));
}

TEST(TaskScaling, ScaledBudgetTokensPerProblemNonIncreasing) {
  // Budget for n problems = n * L_avg * lambda rounded to the granularity,
  // with L_avg from the training probe.
  SimConfig env;
  env.seed = 1;
  TrainConfig train;
  train.seed = 1;
  const auto log = run_bcr_training(env, train, arm_weights("implicit"));
  const auto corpus = generate_corpus(600, 1001, env.class_mix, env);
  const std::vector<double> probe{log.probe_mean};
  const auto points = testing_support::task_scaling(log.policy, corpus, 5, 1, [&](std::size_t n) {
    return select_budget(probe, n, {env.compression_ratio, env.rounding_granularity});
  });
  for (const auto& p : points) {
    std::printf("n=%zu budget=%lld tokens/problem=%.1f accuracy=%.1f\n", p.n, static_cast<long long>(p.budget),
                p.tokens_per_problem, p.accuracy_pct);
  }
  EXPECT_TRUE(testing_support::tokens_non_increasing(points));
}
