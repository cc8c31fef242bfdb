#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "thinkact/action/builtins.hpp"
#include "thinkact/data/dataset.hpp"
#include "thinkact/reward/pairwise.hpp"
#include "thinkact/svc/episodes.hpp"
#include "thinkact/svc/queue.hpp"

namespace httplib {
class Server;
}

namespace thinkact::svc {

inline constexpr const char* kDataDirEnv = "THINKACT_DATA_DIR";

// Where everything lives under the data directory.
struct DataLayout {
  std::filesystem::path root;

  std::filesystem::path tasks() const { return root / "tasks.jsonl"; }
  std::filesystem::path queue_journal() const { return root / "journals" / "queue.jsonl"; }
  std::filesystem::path trajectory_journal() const { return root / "journals" / "trajectories.jsonl"; }
  std::filesystem::path checkpoint(const std::string& id) const { return root / "checkpoints" / (id + ".json"); }
  std::filesystem::path run_steps(const std::string& id) const { return root / "runs" / id / "steps.jsonl"; }
  std::filesystem::path consistency_model() const { return root / "models" / "consistency.json"; }
  std::filesystem::path preference_model() const { return root / "models" / "preference.json"; }

  // `flag` when given, else $THINKACT_DATA_DIR, else ./thinkact-data.
  static DataLayout resolve(const std::optional<std::filesystem::path>& flag = std::nullopt);
};

std::optional<reward::PairwiseModel> load_model_if_present(const std::filesystem::path& path);
train::PolicyParams load_checkpoint(const std::filesystem::path& path);  // Error(kIo) / Error(kSchema)

struct ServiceOptions {
  DataLayout layout;
  action::Clock clock = action::system_clock();
  std::size_t queue_compact_every = 1024;
};

// State behind the HTTP API. Loads tasks and models once at start; the
// queue and trajectory stores replay their journals.
class Service {
 public:
  explicit Service(ServiceOptions options);

  // Registers every route on `server`.
  void mount(httplib::Server& server);

  QueueStore& queue() noexcept { return *queue_; }
  TrajectoryStore& trajectories() noexcept { return *trajectories_; }
  const data::ActionTask* find_task(std::string_view id) const noexcept;

 private:
  ServiceOptions options_;
  std::vector<data::ActionTask> tasks_;
  std::map<std::string, std::size_t, std::less<>> task_index_;
  std::optional<reward::PairwiseModel> preference_model_;
  std::unique_ptr<QueueStore> queue_;
  std::unique_ptr<TrajectoryStore> trajectories_;
};

}  // namespace thinkact::svc
