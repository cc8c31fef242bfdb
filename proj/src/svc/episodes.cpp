#include "thinkact/svc/episodes.hpp"

#include <cstdio>

#include "thinkact/context/context_store.hpp"
#include "thinkact/data/reference.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/reward/scorers.hpp"

namespace thinkact::svc {

namespace {

using nlohmann::json;
using namespace protocol;

json key_json(const context::KeyRef& ref) {
  json j{{"scope", to_string(ref.scope)}, {"key", ref.key}};
  if (ref.call_id) j["call_id"] = *ref.call_id;
  return j;
}

json keys_json(const std::vector<context::KeyRef>& refs) {
  json out = json::array();
  for (const auto& r : refs) out.push_back(key_json(r));
  return out;
}

}  // namespace

json EpisodeRequest::to_json() const {
  return json{{"task_id", task_id}, {"policy_ref", policy_ref}, {"limits", limits}, {"seed", seed}};
}

EpisodeRequest EpisodeRequest::from_json(const json& j) {
  try {
    if (!j.is_object()) throw Error(Errc::kSchema, "episode request must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key != "task_id" && key != "policy_ref" && key != "limits" && key != "seed") {
        throw Error(Errc::kSchema, "unknown field '" + key + "'");
      }
    }
    EpisodeRequest r;
    r.task_id = j.at("task_id").get<std::string>();
    if (j.contains("policy_ref")) r.policy_ref = j.at("policy_ref").get<std::string>();
    if (j.contains("limits")) {
      r.limits = j.at("limits");
      if (!r.limits.is_object()) throw Error(Errc::kSchema, "limits must be an object");
    }
    if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
    if (r.task_id.empty() || r.policy_ref.empty()) throw Error(Errc::kSchema, "task_id and policy_ref must be non-empty");
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

json EpisodeRecord::to_json() const {
  json d = json::array();
  for (const auto& r : dispatch) d.push_back(r.to_json());
  return json{{"id", id},         {"task_id", task_id}, {"policy_ref", policy_ref}, {"document", document},
              {"dispatch", d},    {"context", context}, {"created_at", created_at}};
}

EpisodeRecord EpisodeRecord::from_json(const json& j) {
  try {
    if (!j.is_object() || j.size() != 7) throw Error(Errc::kSchema, "episode record has the wrong field set");
    EpisodeRecord r;
    r.id = j.at("id").get<std::string>();
    r.task_id = j.at("task_id").get<std::string>();
    r.policy_ref = j.at("policy_ref").get<std::string>();
    r.document = j.at("document").get<std::string>();
    for (const auto& d : j.at("dispatch")) r.dispatch.push_back(action::DispatchRecord::from_json(d));
    r.context = j.at("context");
    r.created_at = j.at("created_at").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

action::SecurityPolicy resolve_limits(const json& limits, const action::Registry& registry) {
  if (!limits.is_object()) throw Error(Errc::kSchema, "limits must be an object");
  auto merged = action::SecurityPolicy::permissive(registry).to_json();
  for (const auto& [key, value] : limits.items()) {
    if (!merged.contains(key)) throw Error(Errc::kSchema, "unknown limit '" + key + "'");
    merged[key] = value;
  }
  auto policy = action::SecurityPolicy::from_json(merged);
  policy.check(registry);
  return policy;
}

EpisodeRecord run_scripted(const data::ActionTask& task, const action::SecurityPolicy& policy,
                           const action::Registry& registry) {
  policy.check(registry);
  // What the plan expects, from the stub environment.
  const auto expected = data::execute_required(task);

  context::ContextStore store(data::kStubMemoryBudget);
  action::Dispatcher dispatcher(registry, policy, action::BuiltinEnv{action::fixed_clock(data::kStubClock), &store, 0, 0});
  action::DispatchCounters counters;
  EpisodeRecord out;
  out.task_id = task.task_id;
  out.policy_ref = std::string(kScripted);

  std::vector<Item> items;
  for (std::size_t i = 0; i < task.required_actions.size(); ++i) {
    const auto& ra = task.required_actions[i];
    const auto id = static_cast<std::int64_t>(i + 1);
    const std::string thought =
        "Step " + std::to_string(id) + " uses " + ra.name + ".\n" + plan_line(ra.name, ra.args, expected[i].payload);
    items.emplace_back(ThinkBlock::from_text(neutralize(thought)));
    const ActionCall call{id, ra.name, ra.name == action::kMemPut ? Scope::kGlobal : Scope::kLocal, ra.args, {}};
    items.emplace_back(call);

    store.open_scope(id);
    const auto prompt = store.assemble_prompt(id);
    auto record = dispatcher.dispatch(call, counters);
    const std::string key = "result_" + std::to_string(id);
    auto evicted = store.record(context::ContextEntry{key, record.result.payload, Scope::kLocal, id, counters.turn_index});
    std::vector<std::string> promoted;
    if (call.scope == Scope::kGlobal) promoted.push_back(key);
    const auto closed = store.close_scope(id, promoted);
    evicted.insert(evicted.end(), closed.begin(), closed.end());
    out.context.push_back(json{{"call_id", id},
                               {"prompt_keys", keys_json(prompt.included_keys)},
                               {"promoted", promoted},
                               {"evicted", evicted}});
    items.emplace_back(record.result);
    out.dispatch.push_back(std::move(record));
    counters.next_turn();
  }

  Trajectory partial{task.task_id, segment_turns(items), false};
  std::string answer = reward::expected_answer(partial, task.gold_answer);
  if (answer.empty()) answer = data::free_form_answer(task);
  items.emplace_back(ThinkBlock::from_text(items.empty() ? "No actions are needed for this one." : "All steps are done."));
  items.emplace_back(AnswerBlock{neutralize(answer), {}});
  out.document = serialize(Trajectory{task.task_id, segment_turns(std::move(items)), true});
  return out;
}

EpisodeRecord run_sampled(const data::ActionTask& task, const train::PolicyParams& policy, std::uint64_t seed) {
  auto batch = train::sample(policy, {task}, 1, seed);
  EpisodeRecord out;
  out.task_id = task.task_id;
  out.document = std::move(batch.samples.front().candidate.document);
  return out;
}

TrajectoryStore::TrajectoryStore(std::filesystem::path journal, action::Clock clock)
    : journal_(std::move(journal)), clock_(std::move(clock)) {
  auto map = std::make_shared<Map>();
  for (const auto& j : journal_.replay()) {
    auto r = std::make_shared<const EpisodeRecord>(EpisodeRecord::from_json(j));
    const auto id = r->id;
    (*map)[id] = std::move(r);
  }
  records_ = std::move(map);
}

EpisodeRecord TrajectoryStore::add(EpisodeRecord record) {
  std::lock_guard lock(writer_);
  const auto current = std::atomic_load(&records_);
  char id[16];
  std::snprintf(id, sizeof id, "tr%06zu", current->size() + 1);
  record.id = id;
  record.created_at = action::format_iso8601(clock_());
  journal_.append(record.to_json());
  auto next = std::make_shared<Map>(*current);
  (*next)[record.id] = std::make_shared<const EpisodeRecord>(record);
  std::atomic_store(&records_, std::shared_ptr<const Map>(std::move(next)));
  return record;
}

std::optional<EpisodeRecord> TrajectoryStore::get(std::string_view id) const {
  const auto map = std::atomic_load(&records_);
  const auto it = map->find(id);
  if (it == map->end()) return std::nullopt;
  return *it->second;
}

std::size_t TrajectoryStore::size() const { return std::atomic_load(&records_)->size(); }

}  // namespace thinkact::svc
