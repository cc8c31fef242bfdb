#include "thinkact/action/dispatcher.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/escape.hpp"

namespace thinkact::action {

namespace {

using nlohmann::json;
using protocol::ActionCall;
using protocol::ActionResult;
using protocol::ResultStatus;

std::string denial_message(PolicyVerdict verdict) {
  switch (verdict) {
    case PolicyVerdict::kDeniedAllowlist: return "denied: action not allowed";
    case PolicyVerdict::kDeniedSchema: return "denied: arguments do not match schema";
    case PolicyVerdict::kDeniedRate: return "denied: call limit reached";
    case PolicyVerdict::kAllowed: break;
  }
  return {};
}

}  // namespace

std::string_view to_string(PolicyVerdict verdict) noexcept {
  switch (verdict) {
    case PolicyVerdict::kAllowed: return "ALLOWED";
    case PolicyVerdict::kDeniedAllowlist: return "DENIED_ALLOWLIST";
    case PolicyVerdict::kDeniedSchema: return "DENIED_SCHEMA";
    case PolicyVerdict::kDeniedRate: return "DENIED_RATE";
  }
  return "?";
}

std::optional<PolicyVerdict> verdict_from_string(std::string_view text) noexcept {
  for (auto v : {PolicyVerdict::kAllowed, PolicyVerdict::kDeniedAllowlist, PolicyVerdict::kDeniedSchema,
                 PolicyVerdict::kDeniedRate}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

json DispatchRecord::to_json() const {
  return json{
      {"call",
       {{"id", call.id},
        {"name", call.name},
        {"scope", protocol::to_string(call.scope)},
        {"args", json::parse(protocol::canonical_args(call.args))}}},
      {"result", {{"call_id", result.call_id}, {"status", protocol::to_string(result.status)}, {"payload", result.payload}}},
      {"latency_ms", latency_ms},
      {"policy_verdict", to_string(policy_verdict)},
  };
}

DispatchRecord DispatchRecord::from_json(const json& j) {
  try {
    DispatchRecord r;
    const auto& c = j.at("call");
    r.call.id = c.at("id").get<std::int64_t>();
    r.call.name = c.at("name").get<std::string>();
    const auto scope = protocol::scope_from_string(c.at("scope").get<std::string>());
    auto args = protocol::parse_args(c.at("args").dump());
    const auto& res = j.at("result");
    r.result.call_id = res.at("call_id").get<std::int64_t>();
    const auto status = protocol::status_from_string(res.at("status").get<std::string>());
    r.result.payload = res.at("payload").get<std::string>();
    r.latency_ms = j.at("latency_ms").get<double>();
    const auto verdict = verdict_from_string(j.at("policy_verdict").get<std::string>());
    if (!scope || !args || !status || !verdict) throw Error(Errc::kSchema, "bad dispatch record");
    r.call.scope = *scope;
    r.call.args = std::move(*args);
    r.result.status = *status;
    r.policy_verdict = *verdict;
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

Dispatcher::Dispatcher(const Registry& registry, SecurityPolicy policy, BuiltinEnv env, ExternalChannel* channel,
                       std::size_t max_workers)
    : registry_(registry),
      policy_(std::move(policy)),
      env_(std::move(env)),
      channel_(channel),
      max_workers_(std::max<std::size_t>(1, max_workers)) {
  policy_.check(registry_);
}

void Dispatcher::open_audit_log(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(Errc::kIo, "cannot open audit log " + path.string());
  std::lock_guard lock(audit_mutex_);
  audit_file_.emplace(std::move(out));
}

PolicyVerdict Dispatcher::verdict(const ActionCall& call, const DispatchCounters& counters) const {
  const ActionSpec* spec = registry_.find(call.name);
  if (spec == nullptr || policy_.allowlist.count(call.name) == 0) return PolicyVerdict::kDeniedAllowlist;
  if (policy_.deny_on_schema_mismatch && !schema_matches(*spec, call.args)) return PolicyVerdict::kDeniedSchema;
  if (counters.calls_this_turn >= policy_.max_calls_per_turn ||
      counters.calls_this_episode >= policy_.max_calls_per_episode) {
    return PolicyVerdict::kDeniedRate;
  }
  return PolicyVerdict::kAllowed;
}

PolicyVerdict Dispatcher::admit(const ActionCall& call, DispatchCounters& counters) {
  const auto v = verdict(call, counters);
  if (v == PolicyVerdict::kAllowed) {
    ++counters.calls_this_turn;
    ++counters.calls_this_episode;
  }
  return v;
}

ActionResult Dispatcher::execute(const ActionCall& call, std::size_t turn_index) {
  const ActionSpec& spec = *registry_.find(call.name);
  ResultStatus status = ResultStatus::kError;
  std::string payload;
  if (spec.kind == ActionKind::kBuiltIn) {
    std::lock_guard lock(env_mutex_);
    BuiltinEnv env = env_;
    env.call_id = call.id;
    env.turn_index = turn_index;
    auto out = run_builtin(call.name, call.args, env);
    status = out.status;
    payload = std::move(out.payload);
  } else if (channel_ == nullptr) {
    payload = "no external channel";
  } else {
    auto reply = channel_->call(WireRequest{call.id, call.name, call.args}, std::chrono::milliseconds(spec.timeout_ms));
    status = reply.status;
    payload = std::move(reply.payload);
  }
  // A remote DENIED is not a policy decision; only the local policy may deny.
  if (status == ResultStatus::kDenied) status = ResultStatus::kError;
  payload = protocol::truncate_utf8(payload, spec.max_payload_bytes);
  return ActionResult{call.id, status, protocol::neutralize(payload), {}};
}

DispatchRecord Dispatcher::run(const ActionCall& call, PolicyVerdict verdict, std::size_t turn_index) {
  const auto start = std::chrono::steady_clock::now();
  DispatchRecord record{call, {}, 0.0, verdict};
  record.call.span = {};
  if (verdict == PolicyVerdict::kAllowed) {
    record.result = execute(call, turn_index);
  } else {
    record.result = ActionResult{call.id, ResultStatus::kDenied, denial_message(verdict), {}};
  }
  record.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return record;
}

void Dispatcher::log(const std::vector<DispatchRecord>& records) {
  std::lock_guard lock(audit_mutex_);
  for (const auto& r : records) {
    audit_.push_back(r);
    if (audit_file_) *audit_file_ << r.to_json().dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
  if (audit_file_) audit_file_->flush();
}

DispatchRecord Dispatcher::dispatch(const ActionCall& call, DispatchCounters& counters) {
  const auto v = admit(call, counters);
  auto record = run(call, v, counters.turn_index);
  log({record});
  return record;
}

std::vector<DispatchRecord> Dispatcher::dispatch_batch(const std::vector<ActionCall>& calls,
                                                       DispatchCounters& counters) {
  std::vector<PolicyVerdict> verdicts;
  verdicts.reserve(calls.size());
  for (const auto& call : calls) verdicts.push_back(admit(call, counters));

  std::vector<DispatchRecord> records(calls.size());
  std::atomic<std::size_t> next{0};
  const std::size_t turn = counters.turn_index;
  auto worker = [&] {
    for (std::size_t i = next++; i < calls.size(); i = next++) records[i] = run(calls[i], verdicts[i], turn);
  };
  const std::size_t n = std::min(max_workers_, calls.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  log(records);
  return records;
}

std::vector<DispatchRecord> Dispatcher::audit() const {
  std::lock_guard lock(audit_mutex_);
  return audit_;
}

}  // namespace thinkact::action
