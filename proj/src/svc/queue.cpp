#include "thinkact/svc/queue.hpp"

#include <algorithm>

#include "thinkact/error.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/reward/candidate.hpp"
#include "thinkact/util.hpp"

namespace thinkact::svc {

namespace {

using nlohmann::json;

std::optional<ItemStatus> status_from_string(std::string_view text) noexcept {
  if (text == "PENDING") return ItemStatus::kPending;
  if (text == "LABELED") return ItemStatus::kLabeled;
  if (text == "SKIPPED") return ItemStatus::kSkipped;
  return std::nullopt;
}

void check_document(const std::string& doc, const char* side) {
  if (doc.size() > protocol::kMaxDocumentBytes || !is_valid_utf8(doc)) {
    throw Error(Errc::kSchema, std::string(side) + " is not a UTF-8 document within the size limit");
  }
}

}  // namespace

std::string_view to_string(ItemStatus status) noexcept {
  switch (status) {
    case ItemStatus::kPending: return "PENDING";
    case ItemStatus::kLabeled: return "LABELED";
    case ItemStatus::kSkipped: return "SKIPPED";
  }
  return "PENDING";
}

std::string_view to_string(Choice choice) noexcept { return choice == Choice::kA ? "A" : "B"; }

std::optional<Choice> choice_from_string(std::string_view text) noexcept {
  if (text == "A") return Choice::kA;
  if (text == "B") return Choice::kB;
  return std::nullopt;
}

bool is_pair_id(std::string_view text) noexcept {
  if (text.empty() || text.size() > 64) return false;
  return std::all_of(text.begin(), text.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

bool is_labeler(std::string_view text) noexcept {
  if (text.empty() || text.size() > 128) return false;
  return std::all_of(text.begin(), text.end(), [](char c) { return c > ' ' && c < 127; });
}

json QueueItem::to_json() const {
  json j{{"pair_id", pair_id},
         {"task_id", task_id},
         {"trajectory_a", trajectory_a},
         {"trajectory_b", trajectory_b},
         {"status", to_string(status)},
         {"label", nullptr},
         {"labeler", nullptr},
         {"labeled_at", nullptr},
         {"enqueued_at", enqueued_at}};
  if (label) j["label"] = to_string(*label);
  if (labeler) j["labeler"] = *labeler;
  if (labeled_at) j["labeled_at"] = *labeled_at;
  return j;
}

QueueItem QueueItem::from_json(const json& j) {
  static const std::vector<std::string> kKeys = {"pair_id", "task_id", "trajectory_a", "trajectory_b", "status",
                                                 "label",   "labeler", "labeled_at",   "enqueued_at"};
  try {
    if (!j.is_object() || j.size() != kKeys.size()) throw Error(Errc::kSchema, "queue item has the wrong field set");
    for (const auto& k : kKeys) {
      if (!j.contains(k)) throw Error(Errc::kSchema, "queue item is missing '" + k + "'");
    }
    QueueItem item;
    item.pair_id = j.at("pair_id").get<std::string>();
    item.task_id = j.at("task_id").get<std::string>();
    item.trajectory_a = j.at("trajectory_a").get<std::string>();
    item.trajectory_b = j.at("trajectory_b").get<std::string>();
    item.enqueued_at = j.at("enqueued_at").get<std::string>();
    const auto status = status_from_string(j.at("status").get<std::string>());
    if (!status) throw Error(Errc::kSchema, "unknown queue status");
    item.status = *status;
    if (!j.at("label").is_null()) {
      item.label = choice_from_string(j.at("label").get<std::string>());
      if (!item.label) throw Error(Errc::kSchema, "label must be A or B");
    }
    if (!j.at("labeler").is_null()) item.labeler = j.at("labeler").get<std::string>();
    if (!j.at("labeled_at").is_null()) item.labeled_at = j.at("labeled_at").get<std::string>();
    if (!is_pair_id(item.pair_id)) throw Error(Errc::kSchema, "bad pair id");
    if (item.label.has_value() != (item.status == ItemStatus::kLabeled)) {
      throw Error(Errc::kSchema, "label must be present exactly when the item is LABELED");
    }
    return item;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

QueueStore::QueueStore(std::filesystem::path journal, action::Clock clock, std::size_t compact_every)
    : journal_(std::move(journal)), clock_(std::move(clock)), compact_every_(std::max<std::size_t>(compact_every, 1)) {
  auto state = std::make_shared<State>();
  for (const auto& record : journal_.replay()) apply(*state, record);
  state_ = std::move(state);
}

void QueueStore::apply(State& state, const json& record) const {
  try {
    const auto op = record.at("op").get<std::string>();
    if (op == "put") {
      auto item = std::make_shared<const QueueItem>(QueueItem::from_json(record.at("item")));
      const auto id = item->pair_id;
      if (state.items.count(id) == 0) state.order.push_back(id);
      state.items[id] = std::move(item);
      return;
    }
    const auto id = record.at("pair_id").get<std::string>();
    const auto it = state.items.find(id);
    if (it == state.items.end()) throw Error(Errc::kSchema, "journal refers to unknown pair " + id);
    auto item = std::make_shared<QueueItem>(*it->second);
    if (op == "label") {
      item->status = ItemStatus::kLabeled;
      item->label = choice_from_string(record.at("label").get<std::string>());
      if (!item->label) throw Error(Errc::kSchema, "label must be A or B");
      item->labeler = record.at("labeler").get<std::string>();
      item->labeled_at = record.at("labeled_at").get<std::string>();
    } else if (op == "skip") {
      item->status = ItemStatus::kSkipped;
    } else {
      throw Error(Errc::kSchema, "unknown journal op " + op);
    }
    it->second = std::move(item);
    state.leases.erase(id);
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

void QueueStore::commit(std::shared_ptr<State> next, const json& record) {
  journal_.append(record);
  std::atomic_store(&state_, std::shared_ptr<const State>(std::move(next)));
  if (journal_.appended() >= compact_every_) {
    std::vector<json> records;
    const auto current = std::atomic_load(&state_);
    for (const auto& id : current->order) records.push_back(json{{"op", "put"}, {"item", current->items.at(id)->to_json()}});
    journal_.compact(records);
  }
}

QueueItem QueueStore::enqueue(QueueItem item) {
  if (!is_pair_id(item.pair_id)) throw Error(Errc::kSchema, "pair_id must be 1-64 characters of [A-Za-z0-9_-]");
  check_document(item.trajectory_a, "trajectory_a");
  check_document(item.trajectory_b, "trajectory_b");
  item.status = ItemStatus::kPending;
  item.label.reset();
  item.labeler.reset();
  item.labeled_at.reset();
  item.enqueued_at = action::format_iso8601(clock_());

  std::lock_guard lock(writer_);
  const auto current = std::atomic_load(&state_);
  if (current->items.count(item.pair_id) != 0) throw Error(Errc::kKeyCollision, "pair " + item.pair_id + " exists");
  auto next = std::make_shared<State>(*current);
  const json record{{"op", "put"}, {"item", item.to_json()}};
  apply(*next, record);
  commit(std::move(next), record);
  return item;
}

std::optional<LeasedItem> QueueStore::next() {
  std::lock_guard lock(writer_);
  const auto current = std::atomic_load(&state_);
  const auto now = clock_();
  for (const auto& id : current->order) {
    const auto& item = *current->items.at(id);
    if (item.status != ItemStatus::kPending) continue;
    const auto lease = current->leases.find(id);
    if (lease != current->leases.end() && lease->second > now) continue;
    auto next = std::make_shared<State>(*current);
    const auto expires = now + kLease;
    next->leases[id] = expires;
    std::atomic_store(&state_, std::shared_ptr<const State>(std::move(next)));
    return LeasedItem{item, expires};
  }
  return std::nullopt;
}

Transition QueueStore::label(std::string_view pair_id, Choice choice, std::string_view labeler) {
  if (!is_labeler(labeler)) throw Error(Errc::kSchema, "labeler must be 1-128 printable characters without spaces");
  std::lock_guard lock(writer_);
  const auto current = std::atomic_load(&state_);
  const auto it = current->items.find(pair_id);
  if (it == current->items.end()) return Transition::kUnknown;
  if (it->second->status != ItemStatus::kPending) return Transition::kConflict;
  const json record{{"op", "label"},
                    {"pair_id", pair_id},
                    {"label", to_string(choice)},
                    {"labeler", labeler},
                    {"labeled_at", action::format_iso8601(clock_())}};
  auto next = std::make_shared<State>(*current);
  apply(*next, record);
  commit(std::move(next), record);
  return Transition::kApplied;
}

Transition QueueStore::skip(std::string_view pair_id) {
  std::lock_guard lock(writer_);
  const auto current = std::atomic_load(&state_);
  const auto it = current->items.find(pair_id);
  if (it == current->items.end()) return Transition::kUnknown;
  if (it->second->status != ItemStatus::kPending) return Transition::kConflict;
  const json record{{"op", "skip"}, {"pair_id", pair_id}};
  auto next = std::make_shared<State>(*current);
  apply(*next, record);
  commit(std::move(next), record);
  return Transition::kApplied;
}

std::shared_ptr<const QueueStore::State> QueueStore::snapshot() const { return std::atomic_load(&state_); }

std::optional<QueueItem> QueueStore::get(std::string_view pair_id) const {
  const auto s = snapshot();
  const auto it = s->items.find(pair_id);
  if (it == s->items.end()) return std::nullopt;
  return *it->second;
}

std::vector<QueueItem> QueueStore::items() const {
  const auto s = snapshot();
  std::vector<QueueItem> out;
  out.reserve(s->order.size());
  for (const auto& id : s->order) out.push_back(*s->items.at(id));
  return out;
}

std::vector<reward::ConsistencyLabel> human_labels(const std::vector<QueueItem>& items) {
  std::vector<reward::ConsistencyLabel> out;
  for (const auto& item : items) {
    if (item.status != ItemStatus::kLabeled) continue;
    out.push_back(reward::ConsistencyLabel{
        reward::Candidate::from_document(item.trajectory_a, item.task_id, item.pair_id + "_a"),
        reward::Candidate::from_document(item.trajectory_b, item.task_id, item.pair_id + "_b"),
        *item.label == Choice::kA ? reward::Preferred::kA : reward::Preferred::kB, reward::LabelSource::kHuman});
  }
  return out;
}

}  // namespace thinkact::svc
