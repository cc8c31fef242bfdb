#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "thinkact/protocol/types.hpp"

namespace thinkact::protocol {

// Canonical JSON object text: keys sorted, compact, scalar values only.
// Throws Error(kInvalidTrajectory) on non-finite doubles.
std::string canonical_args(const Args& args);

// Parses unescaped args text. Empty or all-whitespace text is the empty map.
// Returns nullopt unless the text is a JSON object of scalars.
std::optional<Args> parse_args(std::string_view text);

bool args_are_finite(const Args& args) noexcept;

// Extracts `PLAN: name {args} -> expected` lines from unescaped think text.
std::vector<PlanDecl> extract_plans(std::string_view unescaped_text);

// The line format extract_plans() recognises (unescaped).
std::string plan_line(std::string_view action_name, const Args& args, std::string_view expected);

}  // namespace thinkact::protocol
