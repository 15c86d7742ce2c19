#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcr/corpus.hpp"
#include "bcr/error.hpp"
#include "bcr/grouping.hpp"
#include "bcr/grpo.hpp"
#include "bcr/policy.hpp"
#include "bcr/probe.hpp"
#include "bcr/reward.hpp"
#include "bcr/seed.hpp"
#include "bcr/verification.hpp"

namespace bcr {

enum class DifficultyClass { easy = 0, medium = 1, hard = 2 };
inline constexpr std::size_t kClassCount = 3;

inline std::string_view to_string(DifficultyClass c) {
  switch (c) {
    case DifficultyClass::easy: return "easy";
    case DifficultyClass::medium: return "medium";
    case DifficultyClass::hard: return "hard";
  }
  return "easy";
}

struct SimConfig {
  // Token cost of each verbosity level, strictly increasing.
  std::vector<std::int64_t> verbosity_levels{8, 64, 160, 320, 640};
  // Minimum spend for a correct answer, per class.
  std::array<std::int64_t, kClassCount> thresholds{64, 160, 320};
  // Operand count of the generated expression, per class.
  std::array<std::size_t, kClassCount> operand_counts{2, 4, 6};
  std::array<std::vector<double>, kClassCount> initial_logits{
      std::vector<double>{0.0, 0.0, 0.5, 1.0, 2.5},
      std::vector<double>{0.0, 0.0, 0.5, 1.0, 3.0},
      std::vector<double>{0.0, 0.0, 0.5, 1.0, 3.5}};
  std::array<double, kClassCount> class_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::size_t corpus_size = 300;
  std::size_t group_size = 3;
  double compression_ratio = 0.5;
  std::int64_t rounding_granularity = 32;
  std::size_t probe_rollouts = 4;
  std::int64_t probe_max_tokens = 32768;
  std::uint64_t seed = 0;
  // Log the exact expected reward of the current policy on every row.
  bool track_expected = true;

  void validate() const {
    if (verbosity_levels.empty()) throw ConfigError("at least one verbosity level is required");
    for (std::size_t k = 0; k < verbosity_levels.size(); ++k) {
      if (verbosity_levels[k] <= 0 || (k > 0 && verbosity_levels[k] <= verbosity_levels[k - 1])) {
        throw ConfigError("verbosity levels must be positive and strictly increasing");
      }
    }
    for (std::size_t c = 0; c < kClassCount; ++c) {
      if (initial_logits[c].size() != verbosity_levels.size()) {
        throw ConfigError("each class needs one initial logit per verbosity level");
      }
      if (operand_counts[c] < 2) throw ConfigError("expressions need at least two operands");
      if (c > 0 && (thresholds[c] <= thresholds[c - 1] || operand_counts[c] <= operand_counts[c - 1])) {
        throw ConfigError("thresholds and operand counts must increase with difficulty");
      }
    }
    if (group_size == 0) throw ConfigError("group size must be positive");
  }
};

struct SynthProblem {
  std::string id;
  std::string statement;
  std::string answer;
  std::int64_t min_tokens_for_correct = 0;
  DifficultyClass difficulty_class = DifficultyClass::easy;
};

// ---------------------------------------------------------------------------
// Arithmetic expressions

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(std::string_view s) : s_(s) {}

  std::optional<Rational> parse() {
    auto v = sum();
    skip();
    if (!v || i_ != s_.size()) return std::nullopt;
    return v;
  }

 private:
  void skip() {
    while (i_ < s_.size() && s_[i_] == ' ') ++i_;
  }

  std::optional<Rational> sum() {
    auto v = product();
    while (v) {
      skip();
      if (i_ >= s_.size() || (s_[i_] != '+' && s_[i_] != '-')) break;
      const char op = s_[i_++];
      auto rhs = product();
      if (!rhs) return std::nullopt;
      if (op == '+') {
        *v += *rhs;
      } else {
        *v -= *rhs;
      }
    }
    return v;
  }

  std::optional<Rational> product() {
    auto v = atom();
    while (v) {
      skip();
      if (i_ >= s_.size() || (s_[i_] != '*' && s_[i_] != '/')) break;
      const char op = s_[i_++];
      auto rhs = atom();
      if (!rhs) return std::nullopt;
      if (op == '/') {
        if (*rhs == 0) return std::nullopt;
        *v /= *rhs;
      } else {
        *v *= *rhs;
      }
    }
    return v;
  }

  std::optional<Rational> atom() {
    skip();
    if (i_ < s_.size() && s_[i_] == '(') {
      ++i_;
      auto v = sum();
      skip();
      if (!v || i_ >= s_.size() || s_[i_] != ')') return std::nullopt;
      ++i_;
      return v;
    }
    const std::size_t begin = i_;
    while (i_ < s_.size() && s_[i_] >= '0' && s_[i_] <= '9') ++i_;
    if (i_ == begin || i_ - begin > 18) return std::nullopt;
    return Rational(std::stoll(std::string(s_.substr(begin, i_ - begin))));
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

}  // namespace detail

inline constexpr std::string_view kStatementPrefix = "Evaluate ";

/// Value of an expression over non-negative integers with + - * / and
/// parentheses, using the usual precedence.
inline std::optional<Rational> evaluate_expression(std::string_view expr) {
  return detail::ExprParser(expr).parse();
}

inline std::string format_rational(const Rational& r) {
  using boost::multiprecision::denominator;
  using boost::multiprecision::numerator;
  if (denominator(r) == 1) return numerator(r).str();
  return numerator(r).str() + "/" + denominator(r).str();
}

inline std::string_view statement_expression(std::string_view statement) {
  if (statement.substr(0, kStatementPrefix.size()) == kStatementPrefix) {
    statement.remove_prefix(kStatementPrefix.size());
  }
  return detail::trim(statement);
}

inline std::size_t count_operands(std::string_view statement) {
  std::size_t count = 0;
  bool in_number = false;
  for (char c : statement) {
    const bool digit = c >= '0' && c <= '9';
    if (digit && !in_number) ++count;
    in_number = digit;
  }
  return count;
}

inline std::vector<SynthProblem> generate_synth_problems(std::size_t count, std::uint64_t seed,
                                                         const std::array<double, kClassCount>& class_mix,
                                                         const SimConfig& config = {}) {
  double total = 0.0;
  for (double w : class_mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw BadMix("class proportions must be finite and non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw BadMix("class proportions must sum to 1");
  if (count == 0) throw ConfigError("corpus size must be positive");

  // Largest-remainder apportionment, then a seeded shuffle of the class list.
  std::array<std::size_t, kClassCount> quota{};
  std::array<double, kClassCount> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const double exact = class_mix[c] * static_cast<double>(count);
    quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  while (assigned < count) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kClassCount; ++c) {
      if (remainder[c] > remainder[best]) best = c;
    }
    ++quota[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  std::vector<DifficultyClass> classes;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    classes.insert(classes.end(), quota[c], static_cast<DifficultyClass>(c));
  }
  Rng rng(derive_seed(seed, "sim/classes"));
  rng.shuffle(classes);

  static constexpr std::array<char, 4> ops{'+', '-', '*', '/'};
  std::vector<SynthProblem> out;
  out.reserve(count);
  const std::size_t width = std::to_string(count).size();
  for (std::size_t i = 0; i < count; ++i) {
    Rng r(derive_seed(seed, "sim/problem/" + std::to_string(i)));
    const auto cls = classes[i];
    const std::size_t operands = config.operand_counts[static_cast<std::size_t>(cls)];
    std::string expr = std::to_string(1 + r.below(12));
    for (std::size_t k = 1; k < operands; ++k) {
      expr += ' ';
      expr += ops[r.below(ops.size())];
      expr += ' ';
      expr += std::to_string(1 + r.below(12));
    }
    SynthProblem p;
    const std::string index = std::to_string(i);
    p.id = "s" + std::string(width - index.size(), '0') + index;
    p.statement = std::string(kStatementPrefix) + expr;
    p.answer = format_rational(*evaluate_expression(expr));
    p.min_tokens_for_correct = config.thresholds[static_cast<std::size_t>(cls)];
    p.difficulty_class = cls;
    out.push_back(std::move(p));
  }
  return out;
}

inline Corpus to_corpus(const std::vector<SynthProblem>& problems, std::string source = "sim") {
  Corpus c;
  c.source = std::move(source);
  for (const auto& p : problems) c.problems.push_back(Problem{p.id, p.statement, p.answer, std::nullopt});
  return c;
}

inline Corpus generate_corpus(std::size_t count, std::uint64_t seed, const std::array<double, kClassCount>& class_mix,
                              const SimConfig& config = {}) {
  return to_corpus(generate_synth_problems(count, seed, class_mix, config));
}

// ---------------------------------------------------------------------------
// Toy policy

inline std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - top));
  for (double& x : p) x /= z;
  return p;
}

/// Chooses a verbosity level per problem from a per-class softmax. The class
/// is read off the statement (operand count); an answer is right iff the
/// chosen spend reaches the class threshold. Problems that no longer fit the
/// remaining budget are cut off without an answer, and so is everything after.
class ToyPolicy final : public PolicyAdapter {
 public:
  using Logits = std::vector<std::vector<double>>;

  explicit ToyPolicy(const SimConfig& config = {})
      : levels_(config.verbosity_levels), thresholds_(config.thresholds), operand_counts_(config.operand_counts) {
    config.validate();
    for (const auto& row : config.initial_logits) logits_.push_back(row);
    reference_ = logits_;
  }

  ToyPolicy(const SimConfig& config, Logits logits, Logits reference) : ToyPolicy(config) {
    check_shape(logits);
    check_shape(reference);
    logits_ = std::move(logits);
    reference_ = std::move(reference);
  }

  const std::vector<std::int64_t>& levels() const noexcept { return levels_; }
  const std::array<std::int64_t, kClassCount>& thresholds() const noexcept { return thresholds_; }
  const Logits& logits() const noexcept { return logits_; }
  const Logits& reference_logits() const noexcept { return reference_; }
  std::vector<double> probabilities(std::size_t cls) const { return softmax(logits_.at(cls)); }

  void set_logits(Logits logits) {
    check_shape(logits);
    logits_ = std::move(logits);
  }

  /// Class whose operand count is closest to the statement's.
  std::size_t classify(std::string_view statement) const {
    const auto operands = static_cast<long long>(count_operands(statement));
    std::size_t best = 0;
    for (std::size_t c = 1; c < kClassCount; ++c) {
      if (std::llabs(static_cast<long long>(operand_counts_[c]) - operands) <
          std::llabs(static_cast<long long>(operand_counts_[best]) - operands)) {
        best = c;
      }
    }
    return best;
  }

  Completion sample(std::string_view prompt, std::int64_t budget, std::uint64_t seed) const override {
    Completion out;
    std::int64_t used = 0;
    const auto statements = parse_prompt_statements(prompt);
    std::vector<std::vector<double>> probs;
    for (const auto& row : logits_) probs.push_back(softmax(row));
    for (std::size_t i = 0; i < statements.size(); ++i) {
      const std::string& statement = statements[i];
      const std::size_t cls = classify(statement);
      // Keyed by statement only, so a problem draws the same level wherever
      // it sits in the prompt.
      Rng rng(derive_seed(seed, statement));
      const std::size_t k = rng.categorical(probs[cls]);
      out.trace.push_back(Action{static_cast<int>(cls), static_cast<int>(k)});
      const std::int64_t spend = levels_[k];
      const std::string number = std::to_string(i + 1);
      const std::string_view expr = statement_expression(statement);
      out.text += "### Problem " + number + "\n";
      if (used + spend > budget) {
        out.text += "Working through " + std::string(expr) + " step by step";
        break;
      }
      used += spend;
      const auto value = evaluate_expression(expr);
      std::string answer = "?";
      if (value) answer = format_rational(spend >= thresholds_[cls] ? *value : Rational(*value + 1));
      out.text += "Working through " + std::string(expr) + " step by step (" + std::to_string(spend) +
                  " tokens).\nAnswer" + number + ": \\boxed{" + answer + "}\n\n";
    }
    out.tokens = used;
    return out;
  }

  double log_prob(const ActionTrace& trace) const override {
    double lp = 0.0;
    for (const auto& a : trace) {
      const auto& row = logits_.at(static_cast<std::size_t>(a.context));
      const double top = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double x : row) z += std::exp(x - top);
      lp += row.at(static_cast<std::size_t>(a.choice)) - top - std::log(z);
    }
    return lp;
  }

  /// Sum over classes of KL(current || reference).
  double kl_to_reference() const override {
    double kl = 0.0;
    for (std::size_t c = 0; c < logits_.size(); ++c) kl += class_kl(c);
    return kl;
  }

  /// Ascent direction: sum of weight * grad log pi(trace) minus beta * grad KL.
  Logits score_gradient(const PolicySignal& signal) const {
    Logits g(logits_.size(), std::vector<double>(levels_.size(), 0.0));
    std::vector<std::vector<double>> probs;
    for (const auto& row : logits_) probs.push_back(softmax(row));
    for (const auto& [trace, weight] : signal.weighted_traces) {
      if (weight == 0.0) continue;
      for (const auto& a : trace) {
        const auto c = static_cast<std::size_t>(a.context);
        for (std::size_t k = 0; k < levels_.size(); ++k) {
          const double indicator = static_cast<int>(k) == a.choice ? 1.0 : 0.0;
          g[c][k] += weight * (indicator - probs[c][k]);
        }
      }
    }
    if (signal.kl_coefficient != 0.0) {
      for (std::size_t c = 0; c < logits_.size(); ++c) {
        const auto ref = softmax(reference_[c]);
        const double kl = class_kl(c);
        for (std::size_t k = 0; k < levels_.size(); ++k) {
          g[c][k] -= signal.kl_coefficient * probs[c][k] * (std::log(probs[c][k] / ref[k]) - kl);
        }
      }
    }
    return g;
  }

  void apply_update(const PolicySignal& signal, double learning_rate) override {
    const auto g = score_gradient(signal);
    for (std::size_t c = 0; c < logits_.size(); ++c) {
      for (std::size_t k = 0; k < levels_.size(); ++k) logits_[c][k] += learning_rate * g[c][k];
    }
  }

  /// Expected spend per problem of each class when nothing is truncated.
  double expected_level(std::size_t cls) const {
    const auto p = probabilities(cls);
    double e = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) e += p[k] * static_cast<double>(levels_[k]);
    return e;
  }

  nlohmann::json to_json() const { return {{"logits", logits_}, {"reference_logits", reference_}}; }

  static ToyPolicy from_json(const SimConfig& config, const nlohmann::json& j) {
    try {
      return ToyPolicy(config, j.at("logits").get<Logits>(), j.at("reference_logits").get<Logits>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad policy file: ") + e.what());
    }
  }

 private:
  void check_shape(const Logits& l) const {
    if (l.size() != kClassCount) throw ConfigError("policy needs one logit row per class");
    for (const auto& row : l) {
      if (row.size() != levels_.size()) throw ConfigError("policy logit row has the wrong length");
      for (double x : row) {
        if (!std::isfinite(x)) throw ConfigError("policy logits must be finite");
      }
    }
  }

  double class_kl(std::size_t c) const {
    const auto p = softmax(logits_[c]);
    const auto q = softmax(reference_[c]);
    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > 0.0) kl += p[k] * std::log(p[k] / q[k]);
    }
    return std::max(kl, 0.0);
  }

  std::vector<std::int64_t> levels_;
  std::array<std::int64_t, kClassCount> thresholds_;
  std::array<std::size_t, kClassCount> operand_counts_;
  Logits logits_;
  Logits reference_;
};

inline Completion simulate_completion(const ToyPolicy& policy, const ProblemGroup& group, std::uint64_t seed) {
  return policy.sample(group.prompt, group.budget, seed);
}

// ---------------------------------------------------------------------------
// Exact expectations

struct ExpectedOutcome {
  double r_acc = 0.0;
  double r_fmt = 0.0;
  double r_len = 0.0;
  double tokens = 0.0;

  double total(const RewardWeights& w) const { return w.w_acc * r_acc + w.w_fmt * r_fmt + w.w_len * r_len; }
};

/// Expected reward components of one group with the given class sequence,
/// computed by propagating the distribution of tokens spent so far.
inline ExpectedOutcome expected_outcome(const ToyPolicy& policy, const std::vector<std::size_t>& classes,
                                        std::int64_t budget, std::int64_t max_len) {
  ExpectedOutcome out;
  if (classes.empty()) return out;
  const auto& levels = policy.levels();
  std::map<std::int64_t, double> states{{0, 1.0}};
  double expected_correct = 0.0;
  const double len_scale = 1.0 / static_cast<double>(max_len);
  for (const std::size_t cls : classes) {
    const auto p = policy.probabilities(cls);
    std::map<std::int64_t, double> next;
    for (const auto& [used, mass] : states) {
      for (std::size_t k = 0; k < levels.size(); ++k) {
        const double q = mass * p[k];
        if (q == 0.0) continue;
        if (used + levels[k] > budget) {
          out.tokens += q * static_cast<double>(used);
          out.r_len -= q * std::min(1.0, static_cast<double>(used) * len_scale);
          continue;
        }
        if (levels[k] >= policy.thresholds()[cls]) expected_correct += q;
        next[used + levels[k]] += q;
      }
    }
    states = std::move(next);
  }
  for (const auto& [used, mass] : states) {
    out.r_fmt += mass;
    out.tokens += mass * static_cast<double>(used);
    out.r_len -= mass * std::min(1.0, static_cast<double>(used) * len_scale);
  }
  out.r_acc = expected_correct / static_cast<double>(classes.size());
  return out;
}

/// Mean of expected_outcome over a set of class sequences.
inline ExpectedOutcome expected_outcome(const ToyPolicy& policy, const std::vector<std::vector<std::size_t>>& sequences,
                                        std::int64_t budget, std::int64_t max_len) {
  ExpectedOutcome mean;
  std::map<std::vector<std::size_t>, ExpectedOutcome> cache;
  for (const auto& seq : sequences) {
    auto it = cache.find(seq);
    if (it == cache.end()) it = cache.emplace(seq, expected_outcome(policy, seq, budget, max_len)).first;
    mean.r_acc += it->second.r_acc;
    mean.r_fmt += it->second.r_fmt;
    mean.r_len += it->second.r_len;
    mean.tokens += it->second.tokens;
  }
  if (!sequences.empty()) {
    const double inv = 1.0 / static_cast<double>(sequences.size());
    mean.r_acc *= inv;
    mean.r_fmt *= inv;
    mean.r_len *= inv;
    mean.tokens *= inv;
  }
  return mean;
}

struct DeterministicOptimum {
  std::array<std::size_t, kClassCount> level_of_class{};
  ExpectedOutcome outcome;
  double reward = -std::numeric_limits<double>::infinity();
};

/// Best fixed class-to-level assignment, found by trying all of them.
inline DeterministicOptimum brute_force_optimum(const SimConfig& config,
                                                const std::vector<std::vector<std::size_t>>& sequences,
                                                std::int64_t budget, std::int64_t max_len,
                                                const RewardWeights& weights) {
  const std::size_t m = config.verbosity_levels.size();
  DeterministicOptimum best;
  std::array<std::size_t, kClassCount> pick{};
  for (std::size_t code = 0, total = m * m * m; code < total; ++code) {
    pick = {code % m, (code / m) % m, code / (m * m)};
    ToyPolicy::Logits logits(kClassCount, std::vector<double>(m, -1e6));
    for (std::size_t c = 0; c < kClassCount; ++c) logits[c][pick[c]] = 0.0;
    ToyPolicy fixed(config, logits, logits);
    const auto outcome = expected_outcome(fixed, sequences, budget, max_len);
    const double r = outcome.total(weights);
    if (r > best.reward + 1e-12) {
      best.reward = r;
      best.outcome = outcome;
      best.level_of_class = pick;
    }
  }
  return best;
}

inline double mean_verbosity(const ToyPolicy& policy, const std::array<double, kClassCount>& class_weights) {
  double v = 0.0;
  for (std::size_t c = 0; c < kClassCount; ++c) v += class_weights[c] * policy.expected_level(c);
  return v;
}

// ---------------------------------------------------------------------------
// Training driver

inline RewardWeights arm_weights(std::string_view arm) {
  if (arm == "implicit") return {2.0, 1.0, 0.0};
  if (arm == "penalty-211") return {2.0, 1.0, 1.0};
  if (arm == "penalty-511") return {5.0, 1.0, 1.0};
  throw ConfigError("unknown arm: " + std::string(arm));
}

struct TrainingRow {
  std::size_t step = 0;
  std::string arm;
  double mean_tokens = 0.0;
  double accuracy = 0.0;  // percent
  double r_acc = 0.0;
  double r_fmt = 0.0;
  double r_len = 0.0;
  double kl = 0.0;
  double objective = 0.0;
  // Exact expectations over the training groups for the policy that sampled this row.
  std::optional<double> expected_reward;
  std::optional<double> expected_objective;
};

struct TrainingLog {
  std::vector<TrainingRow> rows;
  std::int64_t budget = 0;
  double probe_mean = 0.0;
  std::vector<ProblemGroup> groups;
  std::vector<std::vector<std::size_t>> group_classes;
  std::array<double, kClassCount> class_share{};
  ToyPolicy policy;
};

inline nlohmann::json to_json(const TrainingRow& r) {
  nlohmann::json j{{"step", r.step},   {"arm", r.arm},     {"mean_tokens", r.mean_tokens},
                   {"accuracy", r.accuracy}, {"r_acc", r.r_acc}, {"r_fmt", r.r_fmt},
                   {"r_len", r.r_len}, {"kl", r.kl},       {"objective", r.objective}};
  if (r.expected_reward) j["expected_reward"] = *r.expected_reward;
  if (r.expected_objective) j["expected_objective"] = *r.expected_objective;
  return j;
}

// Called with the step number (0 before training) and the current policy.
using StepObserver = std::function<void(std::size_t, const ToyPolicy&, std::int64_t budget)>;

/// Generates a synthetic corpus, probes difficulty with the initial policy,
/// picks the group budget, builds stratified groups and runs `train.steps`
/// GRPO steps. Every sampled completion goes through extraction, verification
/// and the reward as text.
inline TrainingLog run_bcr_training(const SimConfig& env, const TrainConfig& train, const RewardWeights& weights,
                                    std::string arm = {}, const StepObserver& observer = {}) {
  env.validate();
  train.validate();
  weights.validate();
  TrainingLog log{.policy = ToyPolicy(env)};

  const auto synth = generate_synth_problems(env.corpus_size, env.seed, env.class_mix, env);
  std::unordered_map<std::string, std::size_t> class_of;
  for (const auto& p : synth) {
    class_of[p.id] = static_cast<std::size_t>(p.difficulty_class);
    log.class_share[static_cast<std::size_t>(p.difficulty_class)] += 1.0 / static_cast<double>(synth.size());
  }

  ProbeConfig probe;
  probe.rollouts = env.probe_rollouts;
  probe.seed = derive_seed(env.seed, "sim/probe");
  probe.max_tokens = env.probe_max_tokens;
  const Corpus scored = estimate_difficulty(to_corpus(synth), log.policy, probe);
  std::vector<double> lengths;
  for (const auto& p : scored.problems) lengths.push_back(*p.difficulty);
  log.probe_mean = std::accumulate(lengths.begin(), lengths.end(), 0.0) / static_cast<double>(lengths.size());
  log.budget = select_budget(lengths, env.group_size, {env.compression_ratio, env.rounding_granularity});

  GroupingConfig grouping;
  grouping.group_size = env.group_size;
  grouping.seed = derive_seed(env.seed, "sim/grouping");
  log.groups = build_groups(scored, grouping, log.budget).groups;
  for (const auto& g : log.groups) {
    std::vector<std::size_t> seq;
    for (const auto& m : g.members) seq.push_back(class_of.at(m.id));
    log.group_classes.push_back(std::move(seq));
  }

  const std::int64_t max_len = log.budget;
  const RewardFn reward_fn = [&](const Completion& c, const ProblemGroup& g) {
    return total_reward(c.text, c.tokens, g, weights, max_len);
  };

  auto expected_row = [&](TrainingRow& row) {
    if (!env.track_expected) return;
    const auto e = expected_outcome(log.policy, log.group_classes, log.budget, max_len);
    row.expected_reward = e.total(weights);
    row.expected_objective = objective_value(*row.expected_reward, log.policy.kl_to_reference(),
                                             train.kl_coefficient);
  };

  {
    TrainingRow init;
    init.step = 0;
    init.arm = arm;
    const auto e = expected_outcome(log.policy, log.group_classes, log.budget, max_len);
    init.mean_tokens = e.tokens;
    init.r_acc = e.r_acc;
    init.accuracy = 100.0 * e.r_acc;
    init.r_fmt = e.r_fmt;
    init.r_len = e.r_len;
    init.kl = log.policy.kl_to_reference();
    init.objective = objective_value(e.total(weights), init.kl, train.kl_coefficient);
    expected_row(init);
    log.rows.push_back(std::move(init));
  }
  if (observer) observer(0, log.policy, log.budget);

  std::vector<std::size_t> order;
  for (std::size_t step = 1; step <= train.steps; ++step) {
    const std::size_t pos = (step - 1) % log.groups.size();
    if (pos == 0) {
      order.resize(log.groups.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(train.seed, "train/epoch/" + std::to_string((step - 1) / log.groups.size())));
      rng.shuffle(order);
    }
    TrainingRow row;
    row.step = step;
    row.arm = arm;
    expected_row(row);
    const auto report = train_step(log.policy, log.groups[order[pos]], reward_fn, train, step);
    row.mean_tokens = report.mean_tokens;
    row.r_acc = report.r_acc;
    row.accuracy = 100.0 * report.r_acc;
    row.r_fmt = report.r_fmt;
    row.r_len = report.r_len;
    row.kl = report.kl;
    row.objective = report.objective;
    log.rows.push_back(std::move(row));
    if (observer) observer(step, log.policy, log.budget);
  }
  return log;
}

}  // namespace bcr
