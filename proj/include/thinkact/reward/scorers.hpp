#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "thinkact/protocol/types.hpp"
#include "thinkact/reward/candidate.hpp"

namespace thinkact::reward {

double format_penalty(protocol::ViolationKind kind) noexcept;

// max(0, 1 - sum of penalties).
double format_reward(const std::vector<protocol::Violation>& violations) noexcept;

// Calls with a matched result whose status is not DENIED, in document order.
std::vector<const protocol::ActionCall*> executed_calls(const protocol::Trajectory& t);

// Fraction of executed calls declared by a PLAN line of the nearest think
// block before them; 1 when nothing was executed.
double declared_fraction(const protocol::Trajectory& t);

// What the answer should say: the last OK result payload (unescaped,
// trimmed), or `gold` when no call succeeded.
std::string expected_answer(const protocol::Trajectory& t, std::string_view gold);

// 0.5 * declared_fraction + 0.5 * [answer == expected_answer].
// Throws Error(kNotTerminal) without a final answer.
double consistency_oracle(const protocol::Trajectory& t, std::string_view gold);

// 1 when the trimmed answer equals gold, or both parse as numbers within
// numeric_tol. Throws Error(kNotTerminal).
double rule_reward(const protocol::Trajectory& t, std::string_view gold, double numeric_tol);

}  // namespace thinkact::reward
