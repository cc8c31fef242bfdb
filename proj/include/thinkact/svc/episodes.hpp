#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/action/dispatcher.hpp"
#include "thinkact/data/dataset.hpp"
#include "thinkact/svc/journal.hpp"
#include "thinkact/train/policy.hpp"

namespace thinkact::svc {

inline constexpr std::string_view kScripted = "SCRIPTED";

struct EpisodeRequest {
  std::string task_id;
  std::string policy_ref = std::string(kScripted);  // or a checkpoint id
  nlohmann::json limits = nlohmann::json::object();  // SecurityPolicy field overrides
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  // task_id is required, the rest optional. Throws Error(kSchema).
  static EpisodeRequest from_json(const nlohmann::json& j);
};

struct EpisodeRecord {
  std::string id;
  std::string task_id;
  std::string policy_ref;
  std::string document;
  std::vector<action::DispatchRecord> dispatch;
  // One entry per call: prompt keys visible to it, evictions, promotions.
  nlohmann::json context = nlohmann::json::array();
  std::string created_at;

  nlohmann::json to_json() const;
  static EpisodeRecord from_json(const nlohmann::json& j);  // Error(kSchema)
};

// Overrides applied on top of the permissive policy for `registry`.
// Throws Error(kSchema) or Error(kInvalidPolicy).
action::SecurityPolicy resolve_limits(const nlohmann::json& limits, const action::Registry& registry);

// The task's reference plan, executed live: every call goes through a
// Dispatcher under `policy`, results land in the call's local context scope,
// and GLOBAL calls promote theirs. The answer follows the results that came
// back. With the permissive policy the document equals the reference.
EpisodeRecord run_scripted(const data::ActionTask& task, const action::SecurityPolicy& policy,
                           const action::Registry& registry = {});

// One sample of the simulated policy.
EpisodeRecord run_sampled(const data::ActionTask& task, const train::PolicyParams& policy, std::uint64_t seed);

// Journal-backed, append-only. Ids are tr000001, tr000002, ...
class TrajectoryStore {
 public:
  explicit TrajectoryStore(std::filesystem::path journal, action::Clock clock = action::system_clock());

  // Assigns id and created_at, then persists. Returns the stored record.
  EpisodeRecord add(EpisodeRecord record);
  std::optional<EpisodeRecord> get(std::string_view id) const;
  std::size_t size() const;

 private:
  using Map = std::map<std::string, std::shared_ptr<const EpisodeRecord>, std::less<>>;

  Journal journal_;
  action::Clock clock_;
  std::mutex writer_;
  std::shared_ptr<const Map> records_;
};

}  // namespace thinkact::svc
