#include "thinkact/reward/compose.hpp"

#include <cmath>

#include "thinkact/error.hpp"
#include "thinkact/reward/scorers.hpp"

namespace thinkact::reward {

namespace {

void check_unit(const std::optional<double>& v, const char* name) {
  if (v && !(*v >= 0.0 && *v <= 1.0)) throw Error(Errc::kInvalidArgument, std::string(name) + " outside [0,1]");
}

}  // namespace

nlohmann::json RewardBreakdown::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"format", format}, {"total", total}};
  if (consistency) j["consistency"] = *consistency;
  if (rule) j["rule"] = *rule;
  if (preference) j["preference"] = *preference;
  return j;
}

RewardBreakdown compose(TaskKind kind, const RewardParts& parts) {
  const bool want_consistency = kind == TaskKind::kAction;
  const bool want_rule = kind == TaskKind::kReasoning;
  const bool want_preference = kind == TaskKind::kOther;
  if ((parts.consistency && !want_consistency) || (parts.rule && !want_rule) ||
      (parts.preference && !want_preference)) {
    throw Error(Errc::kExtraComponent, std::string("component not used for ") + std::string(to_string(kind)));
  }
  if (!parts.format || (want_consistency && !parts.consistency) || (want_rule && !parts.rule) ||
      (want_preference && !parts.preference)) {
    throw Error(Errc::kMissingComponent, std::string("component missing for ") + std::string(to_string(kind)));
  }
  check_unit(parts.format, "format");
  check_unit(parts.consistency, "consistency");
  check_unit(parts.preference, "preference");
  if (parts.rule && *parts.rule != 0.0 && *parts.rule != 1.0) throw Error(Errc::kInvalidArgument, "rule must be 0 or 1");

  RewardBreakdown b;
  b.kind = kind;
  b.format = *parts.format;
  b.consistency = parts.consistency;
  b.rule = parts.rule;
  b.preference = parts.preference;
  const double other = parts.consistency ? *parts.consistency : parts.rule ? *parts.rule : *parts.preference;
  b.total = kFormatWeight * b.format + kOtherWeight * other;
  return b;
}

RewardBreakdown score(TaskKind kind, const Candidate& c, std::string_view gold, const Scorers& scorers) {
  RewardParts parts;
  parts.format = format_reward(c.violations);
  const bool terminal = c.trajectory.final_answer() != nullptr;
  switch (kind) {
    case TaskKind::kAction:
      if (scorers.consistency_model != nullptr) {
        parts.consistency = score_pairwise(*scorers.consistency_model, c);
      } else {
        parts.consistency = terminal ? consistency_oracle(c.trajectory, gold) : 0.0;
      }
      break;
    case TaskKind::kReasoning:
      parts.rule = terminal ? rule_reward(c.trajectory, gold, scorers.numeric_tol) : 0.0;
      break;
    case TaskKind::kOther:
      parts.preference = score_pairwise(scorers.preference_model ? *scorers.preference_model : PairwiseModel::neutral(), c);
      break;
  }
  return compose(kind, parts);
}

}  // namespace thinkact::reward
