#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/action/builtins.hpp"
#include "thinkact/action/registry.hpp"
#include "thinkact/data/dataset.hpp"
#include "thinkact/protocol/types.hpp"

namespace thinkact::data {

inline constexpr std::string_view kStubClock = "2024-01-01T00:00:00Z";
inline constexpr std::size_t kStubMemoryBudget = 4096;

// Runs the task's required actions in order against a fresh stub
// environment (fixed clock, empty episode memory). Raw outputs.
// Throws Error(kUnsatisfiable) for an action that is not a built-in.
std::vector<action::BuiltinOutput> execute_required(const ActionTask& task);

// True when every action succeeds and the gold answer is the last payload
// (or, without actions, when the task is not an ACTION task).
bool self_consistent(const ActionTask& task);

// Demonstration trajectory: one think with a PLAN line before each call,
// the stub results, then a closing think and the gold answer.
// Throws Error(kUnsatisfiable) when an action is not registered or the
// stub environment cannot reproduce the gold answer.
protocol::Trajectory render_reference(const ActionTask& task, const action::Registry& registry = {});

// Text used as the answer of free-form tasks without gold.
std::string free_form_answer(const ActionTask& task);

struct SftPair {
  std::string prompt;
  std::string completion;
  std::vector<protocol::Span> mask_spans;  // byte ranges of result elements

  bool operator==(const SftPair&) const = default;
  nlohmann::json to_json() const;
  static SftPair from_json(const nlohmann::json& j);  // Error(kSchema)
};

// Prompt = instruction, a blank line, then the rendered context header.
// Throws Error(kMismatch) when the ids differ.
SftPair to_sft_pair(const ActionTask& task, const protocol::Trajectory& reference,
                    const action::Registry& registry = {});

void write_sft_pairs(const std::filesystem::path& path, const std::vector<SftPair>& pairs);
std::vector<SftPair> read_sft_pairs(const std::filesystem::path& path);

}  // namespace thinkact::data
