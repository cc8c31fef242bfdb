#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/protocol/types.hpp"

namespace thinkact::context {

using protocol::Scope;

struct ContextEntry {
  std::string key;
  std::string value;  // neutralized
  Scope scope = Scope::kGlobal;
  std::optional<std::int64_t> origin_call_id;
  std::size_t turn_index = 0;

  std::size_t bytes() const noexcept { return value.size(); }
  bool operator==(const ContextEntry&) const = default;
};

struct KeyRef {
  Scope scope = Scope::kGlobal;
  std::optional<std::int64_t> call_id;  // set for local entries
  std::string key;

  bool operator==(const KeyRef&) const = default;
};

struct PromptView {
  std::string rendered;
  std::vector<KeyRef> included_keys;
  std::vector<KeyRef> dropped_keys;

  bool operator==(const PromptView&) const = default;
};

// Global and per-call local thinking context of one episode. Global entries
// are capped at budget_bytes with oldest-first eviction; a local list lives
// until its call scope closes.
class ContextStore {
 public:
  explicit ContextStore(std::size_t budget_bytes);

  // Appends the entry and returns the global keys evicted to stay within
  // budget, oldest first. An entry larger than the whole budget evicts
  // everything, itself included.
  // Throws Error(kKeyCollision), Error(kNotNeutralized), Error(kInvalidArgument).
  std::vector<std::string> record(ContextEntry entry);

  // Creates an empty local list so the scope can be closed without entries.
  void open_scope(std::int64_t call_id);

  // Re-records `promote` keys as global, then drops the call's local list.
  // Returns evicted global keys. Throws Error(kUnknownScope), Error(kUnknownKey),
  // Error(kKeyCollision); the store is unchanged on error.
  std::vector<std::string> close_scope(std::int64_t call_id, const std::vector<std::string>& promote);

  // Surviving global entries in insertion order, then the local entries of
  // `current_call_id` only.
  PromptView assemble_prompt(std::optional<std::int64_t> current_call_id = std::nullopt) const;
  PromptView assemble_prompt(const protocol::ActionCall& current_call) const {
    return assemble_prompt(current_call.id);
  }

  const std::vector<ContextEntry>& global_entries() const noexcept { return global_; }
  const std::map<std::int64_t, std::vector<ContextEntry>>& local_entries() const noexcept { return local_; }
  const ContextEntry* find_global(std::string_view key) const noexcept;
  std::size_t budget_bytes() const noexcept { return budget_bytes_; }
  std::size_t global_bytes() const noexcept { return global_bytes_; }

  nlohmann::json to_json() const;
  // Throws Error(kSchema) on malformed snapshots or broken invariants.
  static ContextStore from_json(const nlohmann::json& snapshot);

 private:
  std::vector<std::string> append_global(ContextEntry entry);

  std::size_t budget_bytes_;
  std::size_t global_bytes_ = 0;
  std::vector<ContextEntry> global_;
  std::map<std::int64_t, std::vector<ContextEntry>> local_;
};

}  // namespace thinkact::context
