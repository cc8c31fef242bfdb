#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "thinkact/context/context_store.hpp"
#include "thinkact/protocol/types.hpp"

namespace thinkact::action {

using Clock = std::function<std::chrono::system_clock::time_point()>;

Clock system_clock();
// Throws Error(kInvalidArgument) unless `iso` is YYYY-MM-DDTHH:MM:SSZ.
Clock fixed_clock(std::string_view iso);
std::string format_iso8601(std::chrono::system_clock::time_point tp);
std::optional<std::chrono::system_clock::time_point> parse_iso8601(std::string_view text);

// Decimal literals, + - * / and parentheses, evaluated in double precision.
// nullopt on syntax errors, division by zero or a non-finite result.
std::optional<double> evaluate_arithmetic(std::string_view expr);

struct BuiltinEnv {
  Clock clock;
  context::ContextStore* store = nullptr;  // required by mem_get / mem_put
  std::int64_t call_id = 0;
  std::size_t turn_index = 0;
};

// Raw (not yet neutralized) outcome of a built-in.
struct BuiltinOutput {
  protocol::ResultStatus status = protocol::ResultStatus::kOk;
  std::string payload;
};

BuiltinOutput run_builtin(std::string_view name, const protocol::Args& args, BuiltinEnv& env);

// Built-in call with the payload neutralized. Throws Error(kUnknownBuiltin).
protocol::ActionResult eval_builtin(std::string_view name, const protocol::Args& args, BuiltinEnv& env);

}  // namespace thinkact::action
