#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/action/builtins.hpp"
#include "thinkact/reward/pairwise.hpp"
#include "thinkact/svc/journal.hpp"

namespace thinkact::svc {

enum class ItemStatus { kPending, kLabeled, kSkipped };
enum class Choice { kA, kB };

std::string_view to_string(ItemStatus status) noexcept;
std::string_view to_string(Choice choice) noexcept;
std::optional<Choice> choice_from_string(std::string_view text) noexcept;

// 1-64 characters from [A-Za-z0-9_-].
bool is_pair_id(std::string_view text) noexcept;
// 1-128 printable ASCII characters, no spaces.
bool is_labeler(std::string_view text) noexcept;

struct QueueItem {
  std::string pair_id;
  std::string task_id;  // may be empty
  std::string trajectory_a;
  std::string trajectory_b;
  ItemStatus status = ItemStatus::kPending;
  std::optional<Choice> label;  // present iff LABELED
  std::optional<std::string> labeler;
  std::optional<std::string> labeled_at;
  std::string enqueued_at;

  bool operator==(const QueueItem&) const = default;

  nlohmann::json to_json() const;
  // Closed schema plus the label/status invariant. Throws Error(kSchema).
  static QueueItem from_json(const nlohmann::json& j);
};

struct LeasedItem {
  QueueItem item;
  std::chrono::system_clock::time_point lease_expires;
};

enum class Transition { kApplied, kUnknown, kConflict };

// Labeling queue over a journal. Reads work on immutable snapshots without
// locking; every transition goes through one writer lock and is on disk
// before the call returns. Leases live in memory only.
class QueueStore {
 public:
  static constexpr std::chrono::minutes kLease{10};

  struct State {
    std::map<std::string, std::shared_ptr<const QueueItem>, std::less<>> items;
    std::vector<std::string> order;  // enqueue order
    std::map<std::string, std::chrono::system_clock::time_point, std::less<>> leases;
  };

  // Replays the journal. Throws Error(kIo) / Error(kSchema).
  explicit QueueStore(std::filesystem::path journal, action::Clock clock = action::system_clock(),
                      std::size_t compact_every = 1024);

  // Fills enqueued_at and forces PENDING. Throws Error(kSchema) for a bad
  // id or document, Error(kKeyCollision) for a known pair id.
  QueueItem enqueue(QueueItem item);

  // Oldest PENDING item without a live lease; leases it for kLease.
  std::optional<LeasedItem> next();

  // PENDING -> LABELED exactly once.
  Transition label(std::string_view pair_id, Choice choice, std::string_view labeler);
  // PENDING -> SKIPPED.
  Transition skip(std::string_view pair_id);

  std::shared_ptr<const State> snapshot() const;
  std::optional<QueueItem> get(std::string_view pair_id) const;
  std::vector<QueueItem> items() const;  // enqueue order

 private:
  void apply(State& state, const nlohmann::json& record) const;
  void commit(std::shared_ptr<State> next, const nlohmann::json& record);

  Journal journal_;
  action::Clock clock_;
  std::size_t compact_every_;
  std::mutex writer_;
  std::shared_ptr<const State> state_;
};

// LABELED items as preference labels (source HUMAN) for fit_pairwise.
std::vector<reward::ConsistencyLabel> human_labels(const std::vector<QueueItem>& items);

}  // namespace thinkact::svc
