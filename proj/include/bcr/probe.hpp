#pragma once

#include <cstdint>
#include <exception>
#include <string>
#include <vector>

#include "bcr/corpus.hpp"
#include "bcr/error.hpp"
#include "bcr/grouping.hpp"
#include "bcr/parallel.hpp"
#include "bcr/policy.hpp"
#include "bcr/seed.hpp"

namespace bcr {

struct ProbeConfig {
  std::size_t rollouts = 4;
  std::size_t parallelism = 1;
  // Additional attempts per rollout after the first failure.
  std::size_t retries = 2;
  std::uint64_t seed = 0;
  // Completion cap for single-problem probe prompts.
  std::int64_t max_tokens = 32768;
  PromptTemplate prompt_template = PromptTemplate::standard();
};

/// Mean completion length of each problem when posed alone to `probe`.
/// Returns a new corpus; sub-seeds are keyed by problem id, so results do not
/// depend on corpus order or parallelism.
inline Corpus estimate_difficulty(const Corpus& corpus, const PolicyAdapter& probe, const ProbeConfig& config) {
  if (config.rollouts == 0) throw ConfigError("rollouts must be at least 1");
  if (config.max_tokens <= 0) throw ConfigError("probe max_tokens must be positive");
  Corpus out = corpus;
  std::vector<double> means(corpus.size());
  parallel_for(corpus.size(), config.parallelism, [&](std::size_t idx) {
    const Problem& p = corpus.problems[idx];
    ProblemGroup single;
    single.members = {p};
    single.budget = config.max_tokens;
    const std::string prompt = render_prompt(single, config.prompt_template);
    double total = 0.0;
    for (std::size_t r = 0; r < config.rollouts; ++r) {
      for (std::size_t attempt = 0;; ++attempt) {
        const auto seed = derive_seed(config.seed, "probe/" + p.id + "/" + std::to_string(r) + "/" +
                                                       std::to_string(attempt));
        try {
          total += static_cast<double>(probe.sample(prompt, config.max_tokens, seed).tokens);
          break;
        } catch (const std::exception& e) {
          if (attempt >= config.retries) throw ProbeFailure(p.id, e.what());
        }
      }
    }
    means[idx] = total / static_cast<double>(config.rollouts);
  });
  for (std::size_t i = 0; i < out.problems.size(); ++i) out.problems[i].difficulty = means[i];
  return out;
}

}  // namespace bcr
