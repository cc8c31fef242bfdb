#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/action/builtins.hpp"
#include "thinkact/action/registry.hpp"
#include "thinkact/action/wire.hpp"
#include "thinkact/protocol/types.hpp"

namespace thinkact::action {

enum class PolicyVerdict { kAllowed, kDeniedAllowlist, kDeniedSchema, kDeniedRate };

std::string_view to_string(PolicyVerdict verdict) noexcept;
std::optional<PolicyVerdict> verdict_from_string(std::string_view text) noexcept;

struct DispatchRecord {
  protocol::ActionCall call;
  protocol::ActionResult result;
  double latency_ms = 0.0;
  PolicyVerdict policy_verdict = PolicyVerdict::kAllowed;

  nlohmann::json to_json() const;
  static DispatchRecord from_json(const nlohmann::json& j);  // Error(kSchema)
};

// Allowed calls seen so far; denied calls do not count.
struct DispatchCounters {
  std::size_t turn_index = 0;
  int calls_this_turn = 0;
  int calls_this_episode = 0;

  void next_turn() {
    ++turn_index;
    calls_this_turn = 0;
  }
};

// Routes calls through allowlist, schema and rate checks, runs the allowed
// ones and keeps an audit trail in call order.
class Dispatcher {
 public:
  // `env.store` backs mem_get/mem_put; `channel` may be null when no
  // external actions are registered.
  Dispatcher(const Registry& registry, SecurityPolicy policy, BuiltinEnv env, ExternalChannel* channel = nullptr,
             std::size_t max_workers = 4);

  // Also append every record to a JSONL file. Throws Error(kIo).
  void open_audit_log(const std::filesystem::path& path);

  DispatchRecord dispatch(const protocol::ActionCall& call, DispatchCounters& counters);

  // Verdicts are decided in order, then allowed calls run on up to
  // max_workers threads. Records come back in input order.
  std::vector<DispatchRecord> dispatch_batch(const std::vector<protocol::ActionCall>& calls,
                                             DispatchCounters& counters);

  PolicyVerdict verdict(const protocol::ActionCall& call, const DispatchCounters& counters) const;

  std::vector<DispatchRecord> audit() const;
  const SecurityPolicy& policy() const noexcept { return policy_; }
  const Registry& registry() const noexcept { return registry_; }

 private:
  PolicyVerdict admit(const protocol::ActionCall& call, DispatchCounters& counters);
  protocol::ActionResult execute(const protocol::ActionCall& call, std::size_t turn_index);
  DispatchRecord run(const protocol::ActionCall& call, PolicyVerdict verdict, std::size_t turn_index);
  void log(const std::vector<DispatchRecord>& records);

  const Registry& registry_;
  SecurityPolicy policy_;
  BuiltinEnv env_;
  ExternalChannel* channel_;
  std::size_t max_workers_;

  std::mutex env_mutex_;
  mutable std::mutex audit_mutex_;
  std::vector<DispatchRecord> audit_;
  std::optional<std::ofstream> audit_file_;
};

}  // namespace thinkact::action
