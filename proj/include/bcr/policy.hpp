#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bcr {

// One discrete decision taken while generating: `context` identifies the
// situation (for the toy policy, the difficulty class) and `choice` the option.
struct Action {
  int context = 0;
  int choice = 0;

  bool operator==(const Action&) const = default;
};

using ActionTrace = std::vector<Action>;

struct Completion {
  std::string text;
  std::int64_t tokens = 0;
  ActionTrace trace;
  // Set when the token count is a local estimate rather than provider-reported.
  bool token_count_estimated = false;
};

// Update request handed to a policy: every trace carries the scalar it should be
// reinforced with (advantage / S), plus the KL pull toward the reference policy.
struct PolicySignal {
  std::vector<std::pair<ActionTrace, double>> weighted_traces;
  double kl_coefficient = 0.0;
};

/// Contract between the trainer / harness and whatever produces completions.
///
/// Implementations must keep `sample` thread-safe: difficulty probing and
/// evaluation call it concurrently. The reported token count never exceeds
/// `budget`, and `log_prob` is finite for every trace the adapter produced.
class PolicyAdapter {
 public:
  virtual ~PolicyAdapter() = default;

  virtual Completion sample(std::string_view prompt, std::int64_t budget,
                            std::uint64_t seed) const = 0;
  virtual double log_prob(const ActionTrace& trace) const = 0;
  virtual double kl_to_reference() const = 0;
  virtual void apply_update(const PolicySignal& signal, double learning_rate) = 0;
};

}  // namespace bcr
