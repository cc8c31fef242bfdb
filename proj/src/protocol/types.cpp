#include "thinkact/protocol/types.hpp"

#include <algorithm>

#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/escape.hpp"

namespace thinkact::protocol {

std::string_view to_string(TagName tag) noexcept {
  switch (tag) {
    case TagName::kThink: return "think";
    case TagName::kAct: return "act";
    case TagName::kResult: return "result";
    case TagName::kAnswer: return "answer";
  }
  return "";
}

std::string_view to_string(Scope scope) noexcept { return scope == Scope::kGlobal ? "GLOBAL" : "LOCAL"; }

std::string_view to_string(ResultStatus status) noexcept {
  switch (status) {
    case ResultStatus::kOk: return "OK";
    case ResultStatus::kError: return "ERROR";
    case ResultStatus::kTimeout: return "TIMEOUT";
    case ResultStatus::kDenied: return "DENIED";
  }
  return "";
}

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::kUser: return "USER";
    case Role::kAssistant: return "ASSISTANT";
    case Role::kRuntime: return "RUNTIME";
  }
  return "";
}

std::string_view to_string(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::kUnclosedTag: return "UNCLOSED_TAG";
    case ViolationKind::kUnknownTag: return "UNKNOWN_TAG";
    case ViolationKind::kActOutsideThinkTurn: return "ACT_OUTSIDE_THINK_TURN";
    case ViolationKind::kMissingAnswer: return "MISSING_ANSWER";
    case ViolationKind::kDuplicateId: return "DUPLICATE_ID";
    case ViolationKind::kBadEscape: return "BAD_ESCAPE";
    case ViolationKind::kOrphanResult: return "ORPHAN_RESULT";
    case ViolationKind::kEmptyAnswer: return "EMPTY_ANSWER";
  }
  return "";
}

std::optional<TagName> tag_from_string(std::string_view text) noexcept {
  for (auto t : {TagName::kThink, TagName::kAct, TagName::kResult, TagName::kAnswer}) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

std::optional<Scope> scope_from_string(std::string_view text) noexcept {
  if (text == "GLOBAL") return Scope::kGlobal;
  if (text == "LOCAL") return Scope::kLocal;
  return std::nullopt;
}

std::optional<ResultStatus> status_from_string(std::string_view text) noexcept {
  for (auto s : {ResultStatus::kOk, ResultStatus::kError, ResultStatus::kTimeout, ResultStatus::kDenied}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

std::optional<ViolationKind> violation_from_string(std::string_view text) noexcept {
  for (auto k : kAllViolationKinds) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

ThinkBlock ThinkBlock::from_text(std::string text) {
  ThinkBlock block;
  block.declarations = extract_plans(unescape(text));
  block.text = std::move(text);
  return block;
}

Span span_of(const Item& item) noexcept {
  return std::visit([](const auto& v) { return v.span; }, item);
}

std::vector<const Item*> Trajectory::items() const {
  std::vector<const Item*> out;
  for (const auto& turn : turns) {
    for (const auto& item : turn.items) out.push_back(&item);
  }
  return out;
}

std::vector<const ActionCall*> Trajectory::calls() const {
  std::vector<const ActionCall*> out;
  for (const auto* item : items()) {
    if (const auto* call = std::get_if<ActionCall>(item)) out.push_back(call);
  }
  return out;
}

const AnswerBlock* Trajectory::final_answer() const {
  for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
    if (it->role != Role::kAssistant) continue;
    if (it->items.empty()) return nullptr;
    return std::get_if<AnswerBlock>(&it->items.back());
  }
  return nullptr;
}

std::size_t count_kind(const std::vector<Violation>& violations, ViolationKind kind) noexcept {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(), [kind](const Violation& v) { return v.kind == kind; }));
}

}  // namespace thinkact::protocol
