#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/protocol/types.hpp"
#include "thinkact/reward/candidate.hpp"

namespace thinkact::data {

using reward::TaskKind;

struct RequiredAction {
  std::string name;
  protocol::Args args;

  bool operator==(const RequiredAction&) const = default;
};

struct ActionTask {
  std::string task_id;
  std::string instruction;
  std::vector<RequiredAction> required_actions;
  std::string gold_answer;
  TaskKind kind = TaskKind::kAction;
  std::uint64_t seed = 0;

  bool operator==(const ActionTask&) const = default;

  nlohmann::json to_json() const;
  // Closed schema; throws Error(kSchema).
  static ActionTask from_json(const nlohmann::json& j);
};

using Mix = std::map<TaskKind, double>;

// "action=0.5,reasoning=0.3,other=0.2"; throws Error(kBadMix).
Mix parse_mix(std::string_view text);

// Largest-remainder split of n over the mix, in ACTION, REASONING, OTHER
// order; ties in the remainder go to the earlier kind. Throws Error(kBadMix)
// unless fractions are in [0,1] and sum to 1 within 1e-9.
std::map<TaskKind, std::size_t> apportion(std::size_t n, const Mix& mix);

// Pure function of (n, seed, mix). Ids are t00000, t00001, ... and kinds are
// shuffled by the seed. Every ACTION task is checked against the stub
// environment before it is returned.
std::vector<ActionTask> generate_tasks(std::size_t n, std::uint64_t seed, const Mix& mix);

// One JSON object per line. Throws Error(kIo) / Error(kSchema).
void write_tasks(const std::filesystem::path& path, const std::vector<ActionTask>& tasks);
std::vector<ActionTask> read_tasks(const std::filesystem::path& path);

const ActionTask* find_task(const std::vector<ActionTask>& tasks, std::string_view task_id) noexcept;

}  // namespace thinkact::data
