#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/protocol/types.hpp"

namespace thinkact::action {

enum class ActionKind { kBuiltIn, kExternal };
enum class ArgType { kInt, kFloat, kString, kBool };

inline constexpr int kMaxTimeoutMs = 60'000;

inline constexpr std::string_view kClockNow = "clock_now";
inline constexpr std::string_view kCalcEval = "calc_eval";
inline constexpr std::string_view kMemGet = "mem_get";
inline constexpr std::string_view kMemPut = "mem_put";

bool is_builtin_name(std::string_view name) noexcept;

struct ActionSpec {
  std::string name;
  ActionKind kind = ActionKind::kExternal;
  std::map<std::string, ArgType, std::less<>> arg_schema;
  int timeout_ms = 1000;
  std::size_t max_payload_bytes = 4096;
};

bool schema_matches(const ActionSpec& spec, const protocol::Args& args) noexcept;

// Names are unique; the four built-ins exist from construction.
class Registry {
 public:
  Registry();

  // Throws Error(kDuplicateName) or Error(kInvalidSpec).
  void add(ActionSpec spec);

  const ActionSpec* find(std::string_view name) const noexcept;
  bool contains(std::string_view name) const noexcept { return find(name) != nullptr; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, ActionSpec, std::less<>> specs_;
};

struct SecurityPolicy {
  std::set<std::string, std::less<>> allowlist;
  int max_calls_per_turn = 8;
  int max_calls_per_episode = 64;
  bool neutralize_results = true;
  bool deny_on_schema_mismatch = true;

  // Allow every registered action.
  static SecurityPolicy permissive(const Registry& registry);

  // Throws Error(kInvalidPolicy) when the policy breaks its invariants
  // against `registry`.
  void check(const Registry& registry) const;

  nlohmann::json to_json() const;
  static SecurityPolicy from_json(const nlohmann::json& j);
};

}  // namespace thinkact::action
