#include "thinkact/context/context_store.hpp"

#include <algorithm>

#include "thinkact/error.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/util.hpp"

namespace thinkact::context {

namespace {

using nlohmann::json;

bool has_key(const std::vector<ContextEntry>& entries, std::string_view key) {
  return std::any_of(entries.begin(), entries.end(), [key](const ContextEntry& e) { return e.key == key; });
}

// Brackets are escaped so an entry value can never close or forge a ctx line.
std::string render_value(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    if (c == '[') {
      out += "&#91;";
    } else if (c == ']') {
      out += "&#93;";
    } else {
      out += c;
    }
  }
  return out;
}

json entry_to_json(const ContextEntry& e) {
  return json{{"key", e.key},
              {"value", e.value},
              {"scope", protocol::to_string(e.scope)},
              {"origin_call_id", e.origin_call_id ? json(*e.origin_call_id) : json(nullptr)},
              {"turn_index", e.turn_index}};
}

ContextEntry entry_from_json(const json& j) {
  if (!j.is_object() || j.size() != 5) throw Error(Errc::kSchema, "context entry must have exactly 5 fields");
  try {
    ContextEntry e;
    e.key = j.at("key").get<std::string>();
    e.value = j.at("value").get<std::string>();
    const auto scope = protocol::scope_from_string(j.at("scope").get<std::string>());
    if (!scope) throw Error(Errc::kSchema, "bad scope");
    e.scope = *scope;
    if (!j.at("origin_call_id").is_null()) e.origin_call_id = j.at("origin_call_id").get<std::int64_t>();
    e.turn_index = j.at("turn_index").get<std::size_t>();
    return e;
  } catch (const json::exception& ex) {
    throw Error(Errc::kSchema, ex.what());
  }
}

}  // namespace

ContextStore::ContextStore(std::size_t budget_bytes) : budget_bytes_(budget_bytes) {
  if (budget_bytes == 0) throw Error(Errc::kInvalidArgument, "context budget must be positive");
}

const ContextEntry* ContextStore::find_global(std::string_view key) const noexcept {
  for (const auto& e : global_) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

std::vector<std::string> ContextStore::append_global(ContextEntry entry) {
  global_bytes_ += entry.bytes();
  global_.push_back(std::move(entry));
  std::vector<std::string> evicted;
  std::size_t drop = 0;
  while (global_bytes_ > budget_bytes_) {
    global_bytes_ -= global_[drop].bytes();
    evicted.push_back(global_[drop].key);
    ++drop;
  }
  global_.erase(global_.begin(), global_.begin() + static_cast<std::ptrdiff_t>(drop));
  return evicted;
}

std::vector<std::string> ContextStore::record(ContextEntry entry) {
  if (!is_identifier(entry.key)) throw Error(Errc::kInvalidArgument, "context key must be an identifier");
  if (!protocol::is_neutralized(entry.value)) throw Error(Errc::kNotNeutralized, "context value for '" + entry.key + "'");
  if (entry.scope == Scope::kLocal) {
    if (!entry.origin_call_id) throw Error(Errc::kInvalidArgument, "local entries need an origin call id");
    auto& list = local_[*entry.origin_call_id];
    if (has_key(list, entry.key)) {
      throw Error(Errc::kKeyCollision, "local key '" + entry.key + "' under call " + std::to_string(*entry.origin_call_id));
    }
    list.push_back(std::move(entry));
    return {};
  }
  if (has_key(global_, entry.key)) throw Error(Errc::kKeyCollision, "global key '" + entry.key + "'");
  return append_global(std::move(entry));
}

void ContextStore::open_scope(std::int64_t call_id) { local_.try_emplace(call_id); }

std::vector<std::string> ContextStore::close_scope(std::int64_t call_id, const std::vector<std::string>& promote) {
  const auto it = local_.find(call_id);
  if (it == local_.end()) throw Error(Errc::kUnknownScope, "no local scope for call " + std::to_string(call_id));
  std::vector<ContextEntry> promoted;
  for (const auto& key : promote) {
    const auto found = std::find_if(it->second.begin(), it->second.end(), [&](const ContextEntry& e) { return e.key == key; });
    if (found == it->second.end()) {
      throw Error(Errc::kUnknownKey, "'" + key + "' is not in the scope of call " + std::to_string(call_id));
    }
    const bool repeated = std::any_of(promoted.begin(), promoted.end(), [&](const ContextEntry& e) { return e.key == key; });
    if (has_key(global_, key) || repeated) throw Error(Errc::kKeyCollision, "global key '" + key + "'");
    ContextEntry g = *found;
    g.scope = Scope::kGlobal;
    promoted.push_back(std::move(g));
  }
  local_.erase(it);
  std::vector<std::string> evicted;
  for (auto& e : promoted) {
    auto out = append_global(std::move(e));
    evicted.insert(evicted.end(), out.begin(), out.end());
  }
  return evicted;
}

PromptView ContextStore::assemble_prompt(std::optional<std::int64_t> current_call_id) const {
  PromptView view;
  for (const auto& e : global_) {
    view.rendered += "[ctx scope=G key=" + e.key + "]" + render_value(e.value) + "[/ctx]\n";
    view.included_keys.push_back(KeyRef{Scope::kGlobal, std::nullopt, e.key});
  }
  for (const auto& [call_id, entries] : local_) {
    const bool visible = current_call_id && *current_call_id == call_id;
    for (const auto& e : entries) {
      KeyRef ref{Scope::kLocal, call_id, e.key};
      if (visible) {
        view.rendered += "[ctx scope=L call=" + std::to_string(call_id) + " key=" + e.key + "]" + render_value(e.value) + "[/ctx]\n";
        view.included_keys.push_back(std::move(ref));
      } else {
        view.dropped_keys.push_back(std::move(ref));
      }
    }
  }
  return view;
}

json ContextStore::to_json() const {
  json scopes = json::array();
  json global = json::array();
  for (const auto& e : global_) global.push_back(entry_to_json(e));
  scopes.push_back(json{{"scope", "GLOBAL"}, {"entries", std::move(global)}});
  for (const auto& [call_id, entries] : local_) {
    json list = json::array();
    for (const auto& e : entries) list.push_back(entry_to_json(e));
    scopes.push_back(json{{"scope", "LOCAL"}, {"call_id", call_id}, {"entries", std::move(list)}});
  }
  return json{{"budget_bytes", budget_bytes_}, {"scopes", std::move(scopes)}};
}

ContextStore ContextStore::from_json(const json& snapshot) {
  try {
    if (!snapshot.is_object() || snapshot.size() != 2) throw Error(Errc::kSchema, "snapshot needs budget_bytes and scopes");
    ContextStore store(snapshot.at("budget_bytes").get<std::size_t>());
    for (const auto& scope : snapshot.at("scopes")) {
      const auto kind = scope.at("scope").get<std::string>();
      if (kind == "GLOBAL") {
        for (const auto& j : scope.at("entries")) {
          auto e = entry_from_json(j);
          if (e.scope != Scope::kGlobal) throw Error(Errc::kSchema, "local entry inside the global scope");
          if (!store.record(std::move(e)).empty()) throw Error(Errc::kSchema, "snapshot exceeds its budget");
        }
      } else if (kind == "LOCAL") {
        const auto call_id = scope.at("call_id").get<std::int64_t>();
        store.open_scope(call_id);
        for (const auto& j : scope.at("entries")) {
          auto e = entry_from_json(j);
          if (e.scope != Scope::kLocal || e.origin_call_id != call_id) throw Error(Errc::kSchema, "entry outside its scope");
          store.record(std::move(e));
        }
      } else {
        throw Error(Errc::kSchema, "unknown scope '" + kind + "'");
      }
    }
    return store;
  } catch (const json::exception& ex) {
    throw Error(Errc::kSchema, ex.what());
  } catch (const Error& e) {
    if (e.code() == Errc::kSchema) throw;
    throw Error(Errc::kSchema, e.what());
  }
}

}  // namespace thinkact::context
