#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcr/error.hpp"
#include "bcr/extraction.hpp"
#include "bcr/grouping.hpp"
#include "bcr/verification.hpp"

namespace bcr {

struct RewardWeights {
  double w_acc = 2.0;
  double w_fmt = 1.0;
  double w_len = 0.0;

  void validate() const {
    for (double w : {w_acc, w_fmt, w_len}) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("reward weights must be finite and non-negative");
    }
  }
};

enum class FormatRule {
  section_scoped,  // every marker inside its own "### Problem i" section
  marker_anywhere  // every "Answeri: \boxed{...}" marker present somewhere
};

struct RewardOptions {
  VerifyConfig verify;
  ExtractionOptions extraction;
  FormatRule format_rule = FormatRule::section_scoped;
};

struct RewardBreakdown {
  double r_acc = 0.0;
  double r_fmt = 0.0;
  double r_len = 0.0;
  double total = 0.0;
  std::vector<bool> per_problem_correct;
  std::vector<ExtractionStage> stages;
};

inline std::pair<double, std::vector<bool>> accuracy_reward(const ExtractedAnswerSet& extracted,
                                                            const ProblemGroup& group,
                                                            const VerifyConfig& vcfg = {}) {
  const std::size_t n = group.members.size();
  if (extracted.answers.size() != n) throw ConfigError("extracted answer count differs from group size");
  std::vector<bool> correct(n, false);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = extracted.answers[i];
    correct[i] = a.has_value() && verify(*a, group.members[i].answer, vcfg);
    hits += correct[i];
  }
  return {n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n), std::move(correct)};
}

inline double format_reward(const ExtractedAnswerSet& extracted, FormatRule rule = FormatRule::section_scoped) {
  for (auto stage : extracted.stages) {
    const bool ok = stage == ExtractionStage::section_match ||
                    (rule == FormatRule::marker_anywhere && stage == ExtractionStage::global_match);
    if (!ok) return 0.0;
  }
  return 1.0;
}

inline double format_reward(std::string_view completion, std::size_t n, FormatRule rule = FormatRule::section_scoped,
                            const ExtractionOptions& options = {}) {
  return format_reward(extract_answers(completion, n, options), rule);
}

/// Weighted accuracy + format + length reward. `tokens` is the completion
/// length in the same unit as `max_len`.
inline RewardBreakdown total_reward(std::string_view completion, std::int64_t tokens, const ProblemGroup& group,
                                    const RewardWeights& weights, std::int64_t max_len,
                                    const RewardOptions& options = {}) {
  weights.validate();
  if (max_len <= 0) throw ConfigError("max_len must be positive");
  const auto extracted = extract_answers(completion, group.members.size(), options.extraction);
  RewardBreakdown out;
  std::tie(out.r_acc, out.per_problem_correct) = accuracy_reward(extracted, group, options.verify);
  out.r_fmt = format_reward(extracted, options.format_rule);
  out.r_len = -std::clamp(static_cast<double>(std::max<std::int64_t>(tokens, 0)) / static_cast<double>(max_len), 0.0, 1.0);
  out.total = weights.w_acc * out.r_acc + weights.w_fmt * out.r_fmt + weights.w_len * out.r_len;
  out.stages = extracted.stages;
  return out;
}

inline nlohmann::json to_json(const RewardBreakdown& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (auto s : r.stages) stages.push_back(std::string(to_string(s)));
  return {{"r_acc", r.r_acc},   {"r_fmt", r.r_fmt}, {"r_len", r.r_len},
          {"total", r.total},   {"per_problem_correct", r.per_problem_correct},
          {"stages", stages}};
}

}  // namespace bcr
