#pragma once

#include <optional>
#include <string_view>

#include "json.hpp"
#include "thinkact/reward/candidate.hpp"
#include "thinkact/reward/pairwise.hpp"

namespace thinkact::reward {

inline constexpr double kFormatWeight = 0.5;
inline constexpr double kOtherWeight = 0.5;

struct RewardParts {
  std::optional<double> format;
  std::optional<double> consistency;
  std::optional<double> rule;
  std::optional<double> preference;
};

struct RewardBreakdown {
  TaskKind kind = TaskKind::kAction;
  double format = 0.0;
  std::optional<double> consistency;
  std::optional<double> rule;
  std::optional<double> preference;
  double total = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
  nlohmann::json to_json() const;
};

// ACTION = format + consistency, REASONING = format + rule,
// OTHER = format + preference. Throws Error(kExtraComponent) before
// Error(kMissingComponent); Error(kInvalidArgument) for out-of-range values.
RewardBreakdown compose(TaskKind kind, const RewardParts& parts);

struct Scorers {
  const PairwiseModel* consistency_model = nullptr;  // null: use the oracle
  const PairwiseModel* preference_model = nullptr;   // null: neutral model
  double numeric_tol = 1e-6;
};

// Computes the components the kind needs and composes them. A candidate
// without a final answer gets 0 for consistency and rule.
RewardBreakdown score(TaskKind kind, const Candidate& c, std::string_view gold, const Scorers& scorers = {});

}  // namespace thinkact::reward
