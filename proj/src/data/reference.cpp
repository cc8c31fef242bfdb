#include "thinkact/data/reference.hpp"

#include <fstream>

#include "thinkact/context/context_store.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/protocol/escape.hpp"

namespace thinkact::data {

namespace {

using nlohmann::json;
using namespace protocol;

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace

std::vector<action::BuiltinOutput> execute_required(const ActionTask& task) {
  context::ContextStore store(kStubMemoryBudget);
  action::BuiltinEnv env{action::fixed_clock(kStubClock), &store, 0, 0};
  std::vector<action::BuiltinOutput> out;
  for (std::size_t i = 0; i < task.required_actions.size(); ++i) {
    const auto& ra = task.required_actions[i];
    if (!action::is_builtin_name(ra.name)) {
      throw Error(Errc::kUnsatisfiable, "'" + ra.name + "' cannot run in the stub environment");
    }
    env.call_id = static_cast<std::int64_t>(i + 1);
    out.push_back(action::run_builtin(ra.name, ra.args, env));
  }
  return out;
}

bool self_consistent(const ActionTask& task) {
  if (task.kind != TaskKind::kAction) {
    if (!task.required_actions.empty()) return false;
    return task.kind == TaskKind::kOther ? task.gold_answer.empty() : !task.gold_answer.empty();
  }
  if (task.required_actions.empty()) return false;
  try {
    const auto outputs = execute_required(task);
    for (const auto& o : outputs) {
      if (o.status != ResultStatus::kOk) return false;
    }
    return outputs.back().payload == task.gold_answer;
  } catch (const Error&) {
    return false;
  }
}

std::string free_form_answer(const ActionTask& task) { return "Here is my response to: " + task.instruction; }

Trajectory render_reference(const ActionTask& task, const action::Registry& registry) {
  for (const auto& ra : task.required_actions) {
    if (!registry.contains(ra.name)) throw Error(Errc::kUnsatisfiable, "action '" + ra.name + "' is not registered");
  }
  const auto outputs = execute_required(task);
  for (const auto& o : outputs) {
    if (o.status != ResultStatus::kOk) throw Error(Errc::kUnsatisfiable, "stub action failed: " + o.payload);
  }
  std::string answer = task.gold_answer;
  if (!outputs.empty() && outputs.back().payload != answer) {
    throw Error(Errc::kUnsatisfiable, "stub results do not reproduce the gold answer of " + task.task_id);
  }
  if (answer.empty()) answer = free_form_answer(task);

  std::vector<Item> items;
  for (std::size_t i = 0; i < task.required_actions.size(); ++i) {
    const auto& ra = task.required_actions[i];
    const auto id = static_cast<std::int64_t>(i + 1);
    const std::string thought =
        "Step " + std::to_string(id) + " uses " + ra.name + ".\n" + plan_line(ra.name, ra.args, outputs[i].payload);
    items.emplace_back(ThinkBlock::from_text(neutralize(thought)));
    items.emplace_back(ActionCall{id, ra.name, ra.name == action::kMemPut ? Scope::kGlobal : Scope::kLocal, ra.args, {}});
    items.emplace_back(ActionResult{id, ResultStatus::kOk, neutralize(outputs[i].payload), {}});
  }
  const std::string closing = outputs.empty() ? "No actions are needed for this one." : "All steps are done.";
  items.emplace_back(ThinkBlock::from_text(neutralize(closing)));
  items.emplace_back(AnswerBlock{neutralize(answer), {}});
  return Trajectory{task.task_id, segment_turns(std::move(items)), true};
}

json SftPair::to_json() const {
  json spans = json::array();
  for (const auto& s : mask_spans) spans.push_back(json::array({s.start, s.end}));
  return json{{"prompt", prompt}, {"completion", completion}, {"mask_spans", spans}};
}

SftPair SftPair::from_json(const json& j) {
  try {
    if (!j.is_object() || j.size() != 3) throw Error(Errc::kSchema, "SFT pair must have prompt, completion, mask_spans");
    SftPair p;
    p.prompt = j.at("prompt").get<std::string>();
    p.completion = j.at("completion").get<std::string>();
    std::size_t last_end = 0;
    for (const auto& s : j.at("mask_spans")) {
      if (!s.is_array() || s.size() != 2) throw Error(Errc::kSchema, "mask span must be [start, end]");
      Span span{s[0].get<std::size_t>(), s[1].get<std::size_t>()};
      if (span.start < last_end || span.start >= span.end || span.end > p.completion.size()) {
        throw Error(Errc::kSchema, "mask span out of order or out of bounds");
      }
      last_end = span.end;
      p.mask_spans.push_back(span);
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

SftPair to_sft_pair(const ActionTask& task, const Trajectory& reference, const action::Registry& registry) {
  if (reference.task_id != task.task_id) {
    throw Error(Errc::kMismatch, "reference is for '" + reference.task_id + "', task is '" + task.task_id + "'");
  }
  context::ContextStore header(kStubMemoryBudget);
  header.record(context::ContextEntry{"available_actions", neutralize(join_names(registry.names())), Scope::kGlobal,
                                      std::nullopt, 0});
  SftPair pair;
  pair.prompt = task.instruction + "\n\n" + header.assemble_prompt().rendered;
  pair.completion = serialize(reference);
  const auto parsed = parse(pair.completion, task.task_id);
  for (const auto* item : parsed.trajectory.items()) {
    if (std::holds_alternative<ActionResult>(*item)) pair.mask_spans.push_back(span_of(*item));
  }
  return pair;
}

void write_sft_pairs(const std::filesystem::path& path, const std::vector<SftPair>& pairs) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  for (const auto& p : pairs) out << p.to_json().dump() << '\n';
  out.flush();
  if (!out) throw Error(Errc::kIo, "write failed: " + path.string());
}

std::vector<SftPair> read_sft_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  std::vector<SftPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::kSchema, "invalid JSON line in " + path.string());
    out.push_back(SftPair::from_json(j));
  }
  return out;
}

}  // namespace thinkact::data
