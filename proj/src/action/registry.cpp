#include "thinkact/action/registry.hpp"

#include "thinkact/error.hpp"
#include "thinkact/util.hpp"

namespace thinkact::action {

bool is_builtin_name(std::string_view name) noexcept {
  return name == kClockNow || name == kCalcEval || name == kMemGet || name == kMemPut;
}

bool schema_matches(const ActionSpec& spec, const protocol::Args& args) noexcept {
  if (args.size() != spec.arg_schema.size()) return false;
  for (const auto& [key, type] : spec.arg_schema) {
    const auto it = args.find(key);
    if (it == args.end()) return false;
    const auto& v = it->second;
    bool ok = false;
    switch (type) {
      case ArgType::kInt: ok = std::holds_alternative<std::int64_t>(v); break;
      case ArgType::kFloat: ok = std::holds_alternative<double>(v) || std::holds_alternative<std::int64_t>(v); break;
      case ArgType::kString: ok = std::holds_alternative<std::string>(v); break;
      case ArgType::kBool: ok = std::holds_alternative<bool>(v); break;
    }
    if (!ok) return false;
  }
  return true;
}

Registry::Registry() {
  const auto builtin = [this](std::string_view name, std::map<std::string, ArgType, std::less<>> schema) {
    specs_.emplace(std::string(name), ActionSpec{std::string(name), ActionKind::kBuiltIn, std::move(schema), 1000, 4096});
  };
  builtin(kClockNow, {});
  builtin(kCalcEval, {{"expr", ArgType::kString}});
  builtin(kMemGet, {{"key", ArgType::kString}});
  builtin(kMemPut, {{"key", ArgType::kString}, {"value", ArgType::kString}});
}

void Registry::add(ActionSpec spec) {
  if (!is_identifier(spec.name)) throw Error(Errc::kInvalidSpec, "action name '" + spec.name + "' is not an identifier");
  if (spec.timeout_ms <= 0 || spec.timeout_ms > kMaxTimeoutMs) {
    throw Error(Errc::kInvalidSpec, "timeout_ms must be in 1.." + std::to_string(kMaxTimeoutMs));
  }
  if (spec.max_payload_bytes == 0) throw Error(Errc::kInvalidSpec, "max_payload_bytes must be positive");
  if (specs_.count(spec.name) != 0) throw Error(Errc::kDuplicateName, spec.name);
  if (spec.kind == ActionKind::kBuiltIn) throw Error(Errc::kInvalidSpec, "unknown built-in '" + spec.name + "'");
  auto name = spec.name;
  specs_.emplace(std::move(name), std::move(spec));
}

const ActionSpec* Registry::find(std::string_view name) const noexcept {
  const auto it = specs_.find(name);
  return it == specs_.end() ? nullptr : &it->second;
}

std::vector<std::string> Registry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, spec] : specs_) out.push_back(name);
  return out;
}

SecurityPolicy SecurityPolicy::permissive(const Registry& registry) {
  SecurityPolicy p;
  for (auto& name : registry.names()) p.allowlist.insert(std::move(name));
  return p;
}

void SecurityPolicy::check(const Registry& registry) const {
  for (const auto& name : allowlist) {
    if (!registry.contains(name)) throw Error(Errc::kInvalidPolicy, "allowlisted action '" + name + "' is not registered");
  }
  if (max_calls_per_turn <= 0 || max_calls_per_episode <= 0) {
    throw Error(Errc::kInvalidPolicy, "call limits must be positive");
  }
  if (max_calls_per_turn > max_calls_per_episode) {
    throw Error(Errc::kInvalidPolicy, "max_calls_per_turn exceeds max_calls_per_episode");
  }
  if (!neutralize_results) throw Error(Errc::kInvalidPolicy, "result neutralization cannot be disabled");
}

nlohmann::json SecurityPolicy::to_json() const {
  return nlohmann::json{{"allowlist", allowlist},
                        {"max_calls_per_turn", max_calls_per_turn},
                        {"max_calls_per_episode", max_calls_per_episode},
                        {"neutralize_results", neutralize_results},
                        {"deny_on_schema_mismatch", deny_on_schema_mismatch}};
}

SecurityPolicy SecurityPolicy::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kFields = {"allowlist", "max_calls_per_turn", "max_calls_per_episode",
                                                "neutralize_results", "deny_on_schema_mismatch"};
  try {
    if (!j.is_object()) throw Error(Errc::kSchema, "policy must be an object");
    for (const auto& [key, value] : j.items()) {
      if (kFields.count(key) == 0) throw Error(Errc::kSchema, "unknown policy field '" + key + "'");
    }
    SecurityPolicy p;
    for (const auto& name : j.at("allowlist")) p.allowlist.insert(name.get<std::string>());
    p.max_calls_per_turn = j.value("max_calls_per_turn", p.max_calls_per_turn);
    p.max_calls_per_episode = j.value("max_calls_per_episode", p.max_calls_per_episode);
    p.neutralize_results = j.value("neutralize_results", p.neutralize_results);
    p.deny_on_schema_mismatch = j.value("deny_on_schema_mismatch", p.deny_on_schema_mismatch);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

}  // namespace thinkact::action
