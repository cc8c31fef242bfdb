#include "thinkact/reward/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/util.hpp"

namespace thinkact::reward {

namespace {

using namespace protocol;

std::string clean(std::string_view wire) { return std::string(trim(unescape(wire))); }

// Result per call id, first one wins.
std::map<std::int64_t, const ActionResult*> results_by_call(const Trajectory& t) {
  std::map<std::int64_t, const ActionResult*> out;
  for (const auto* item : t.items()) {
    if (const auto* r = std::get_if<ActionResult>(item)) out.emplace(r->call_id, r);
  }
  return out;
}

const AnswerBlock& require_answer(const Trajectory& t) {
  const auto* answer = t.final_answer();
  if (answer == nullptr) throw Error(Errc::kNotTerminal, "trajectory has no final answer");
  return *answer;
}

}  // namespace

double format_penalty(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::kUnclosedTag: return 0.4;
    case ViolationKind::kUnknownTag: return 0.2;
    case ViolationKind::kActOutsideThinkTurn: return 0.2;
    case ViolationKind::kMissingAnswer: return 0.3;
    case ViolationKind::kDuplicateId: return 0.2;
    case ViolationKind::kBadEscape: return 0.1;
    case ViolationKind::kOrphanResult: return 0.2;
    case ViolationKind::kEmptyAnswer: return 0.2;
  }
  return 0.0;
}

double format_reward(const std::vector<Violation>& violations) noexcept {
  double penalty = 0.0;
  for (const auto& v : violations) penalty += format_penalty(v.kind);
  return std::max(0.0, 1.0 - penalty);
}

std::vector<const ActionCall*> executed_calls(const Trajectory& t) {
  const auto results = results_by_call(t);
  std::vector<const ActionCall*> out;
  for (const auto* call : t.calls()) {
    const auto it = results.find(call->id);
    if (it != results.end() && it->second->status != ResultStatus::kDenied) out.push_back(call);
  }
  return out;
}

double declared_fraction(const Trajectory& t) {
  const auto results = results_by_call(t);
  std::size_t executed = 0;
  std::size_t declared = 0;
  const ThinkBlock* last_think = nullptr;
  for (const auto* item : t.items()) {
    if (const auto* think = std::get_if<ThinkBlock>(item)) {
      last_think = think;
      continue;
    }
    const auto* call = std::get_if<ActionCall>(item);
    if (call == nullptr) continue;
    const auto it = results.find(call->id);
    if (it == results.end() || it->second->status == ResultStatus::kDenied) continue;
    ++executed;
    if (last_think == nullptr) continue;
    const auto digest = canonical_args(call->args);
    const bool hit = std::any_of(last_think->declarations.begin(), last_think->declarations.end(),
                                 [&](const PlanDecl& p) { return p.action_name == call->name && p.args_digest == digest; });
    declared += hit ? 1 : 0;
  }
  return executed == 0 ? 1.0 : static_cast<double>(declared) / static_cast<double>(executed);
}

std::string expected_answer(const Trajectory& t, std::string_view gold) {
  const auto results = results_by_call(t);
  const ActionResult* last_ok = nullptr;
  for (const auto* call : t.calls()) {
    const auto it = results.find(call->id);
    if (it != results.end() && it->second->status == ResultStatus::kOk) last_ok = it->second;
  }
  return last_ok != nullptr ? clean(last_ok->payload) : std::string(trim(gold));
}

double consistency_oracle(const Trajectory& t, std::string_view gold) {
  const auto& answer = require_answer(t);
  const double bit = clean(answer.text) == expected_answer(t, gold) ? 1.0 : 0.0;
  return 0.5 * declared_fraction(t) + 0.5 * bit;
}

double rule_reward(const Trajectory& t, std::string_view gold, double numeric_tol) {
  const auto answer = clean(require_answer(t).text);
  const auto target = std::string(trim(gold));
  if (answer == target) return 1.0;
  const auto a = parse_number(answer);
  const auto g = parse_number(target);
  return a && g && std::fabs(*a - *g) <= numeric_tol ? 1.0 : 0.0;
}

}  // namespace thinkact::reward
