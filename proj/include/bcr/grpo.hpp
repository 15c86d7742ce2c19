#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcr/error.hpp"
#include "bcr/grouping.hpp"
#include "bcr/parallel.hpp"
#include "bcr/policy.hpp"
#include "bcr/reward.hpp"
#include "bcr/seed.hpp"

namespace bcr {

struct TrainConfig {
  std::size_t candidates_per_group = 4;
  double kl_coefficient = 0.01;
  double learning_rate = 0.5;
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  // Divide advantages by the group reward standard deviation.
  bool normalize_by_std = false;
  std::size_t parallelism = 1;

  void validate() const {
    if (candidates_per_group == 0) throw ConfigError("candidates_per_group must be positive");
    if (!(kl_coefficient >= 0.0)) throw ConfigError("kl coefficient must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  }
};

struct AdvantageSet {
  std::vector<double> rewards;
  std::vector<double> advantages;
  double mean_reward = 0.0;
};

/// Reward minus the group mean; optionally scaled by the population standard
/// deviation (groups with zero spread keep all-zero advantages).
inline AdvantageSet compute_advantages(std::span<const double> rewards, bool normalize_by_std = false) {
  AdvantageSet out;
  out.rewards.assign(rewards.begin(), rewards.end());
  for (std::size_t j = 0; j < rewards.size(); ++j) {
    if (!std::isfinite(rewards[j])) throw NonFiniteReward(j);
  }
  if (rewards.empty()) return out;
  const double s = static_cast<double>(rewards.size());
  out.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / s;
  out.advantages.reserve(rewards.size());
  for (double r : rewards) out.advantages.push_back(r - out.mean_reward);
  if (normalize_by_std) {
    double var = 0.0;
    for (double a : out.advantages) var += a * a;
    const double sd = std::sqrt(var / s);
    if (sd > 0.0) {
      for (double& a : out.advantages) a /= sd;
    } else {
      for (double& a : out.advantages) a = 0.0;
    }
  }
  return out;
}

inline double objective_value(double mean_reward, double kl, double beta) {
  if (!(kl >= 0.0)) throw ConfigError("kl must be non-negative");
  return mean_reward - beta * kl;
}

using RewardFn = std::function<RewardBreakdown(const Completion&, const ProblemGroup&)>;

struct StepReport {
  std::size_t step = 0;
  std::vector<double> rewards;
  std::vector<double> advantages;
  double mean_reward = 0.0;
  double mean_tokens = 0.0;
  double r_acc = 0.0;
  double r_fmt = 0.0;
  double r_len = 0.0;
  double kl = 0.0;  // of the policy that produced the samples
  double objective = 0.0;

  bool operator==(const StepReport&) const = default;
};

inline std::uint64_t candidate_seed(std::uint64_t seed, std::size_t step, std::size_t candidate) {
  return derive_seed(seed, "train/step/" + std::to_string(step) + "/candidate/" + std::to_string(candidate));
}

/// Samples S completions for one group, scores them, and applies one
/// policy-gradient update weighted by the group-relative advantages.
inline StepReport train_step(PolicyAdapter& policy, const ProblemGroup& group, const RewardFn& reward_fn,
                             const TrainConfig& config, std::size_t step = 0) {
  config.validate();
  const std::size_t s = config.candidates_per_group;
  std::vector<Completion> completions(s);
  std::vector<RewardBreakdown> scores(s);
  parallel_for(s, config.parallelism, [&](std::size_t j) {
    completions[j] = policy.sample(group.prompt, group.budget, candidate_seed(config.seed, step, j));
    scores[j] = reward_fn(completions[j], group);
  });

  std::vector<double> rewards(s);
  StepReport report;
  report.step = step;
  for (std::size_t j = 0; j < s; ++j) {
    rewards[j] = scores[j].total;
    report.mean_tokens += static_cast<double>(completions[j].tokens);
    report.r_acc += scores[j].r_acc;
    report.r_fmt += scores[j].r_fmt;
    report.r_len += scores[j].r_len;
  }
  const double inv = 1.0 / static_cast<double>(s);
  report.mean_tokens *= inv;
  report.r_acc *= inv;
  report.r_fmt *= inv;
  report.r_len *= inv;

  auto adv = compute_advantages(rewards, config.normalize_by_std);
  report.kl = policy.kl_to_reference();
  report.mean_reward = adv.mean_reward;
  report.objective = objective_value(adv.mean_reward, report.kl, config.kl_coefficient);

  PolicySignal signal;
  signal.kl_coefficient = config.kl_coefficient;
  for (std::size_t j = 0; j < s; ++j) {
    signal.weighted_traces.emplace_back(std::move(completions[j].trace), adv.advantages[j] * inv);
  }
  policy.apply_update(signal, config.learning_rate);

  report.rewards = std::move(adv.rewards);
  report.advantages = std::move(adv.advantages);
  return report;
}

inline nlohmann::json to_json(const StepReport& r) {
  return {{"step", r.step},           {"rewards", r.rewards}, {"advantages", r.advantages},
          {"mean_reward", r.mean_reward}, {"mean_tokens", r.mean_tokens}, {"r_acc", r.r_acc},
          {"r_fmt", r.r_fmt},         {"r_len", r.r_len},     {"kl", r.kl},
          {"objective", r.objective}};
}

}  // namespace bcr
