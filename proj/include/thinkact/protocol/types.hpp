#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace thinkact::protocol {

enum class TagName { kThink, kAct, kResult, kAnswer };
enum class Scope { kGlobal, kLocal };
enum class ResultStatus { kOk, kError, kTimeout, kDenied };
enum class Role { kUser, kAssistant, kRuntime };

enum class ViolationKind {
  kUnclosedTag,
  kUnknownTag,
  kActOutsideThinkTurn,
  kMissingAnswer,
  kDuplicateId,
  kBadEscape,
  kOrphanResult,
  kEmptyAnswer,
};

inline constexpr ViolationKind kAllViolationKinds[] = {
    ViolationKind::kUnclosedTag,   ViolationKind::kUnknownTag,  ViolationKind::kActOutsideThinkTurn,
    ViolationKind::kMissingAnswer, ViolationKind::kDuplicateId, ViolationKind::kBadEscape,
    ViolationKind::kOrphanResult,  ViolationKind::kEmptyAnswer,
};

std::string_view to_string(TagName tag) noexcept;
std::string_view to_string(Scope scope) noexcept;
std::string_view to_string(ResultStatus status) noexcept;
std::string_view to_string(Role role) noexcept;
std::string_view to_string(ViolationKind kind) noexcept;

std::optional<TagName> tag_from_string(std::string_view text) noexcept;
std::optional<Scope> scope_from_string(std::string_view text) noexcept;
std::optional<ResultStatus> status_from_string(std::string_view text) noexcept;
std::optional<ViolationKind> violation_from_string(std::string_view text) noexcept;

// Byte offsets [start, end) into the source document.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const Span&) const = default;
};

using ArgValue = std::variant<bool, std::int64_t, double, std::string>;
using Args = std::map<std::string, ArgValue, std::less<>>;

// One `PLAN: name {args} -> expected` line inside a think block.
struct PlanDecl {
  std::string action_name;
  std::string args_digest;
  std::string expected;

  bool operator==(const PlanDecl&) const = default;
};

// Text fields of every item hold the wire form, i.e. entity-escaped text.
// Spans are source metadata and do not take part in equality.
struct ThinkBlock {
  std::string text;
  std::vector<PlanDecl> declarations;
  Span span;

  // Builds a block whose declarations are extracted from `text`.
  static ThinkBlock from_text(std::string text);

  bool operator==(const ThinkBlock& o) const { return text == o.text && declarations == o.declarations; }
};

struct ActionCall {
  std::int64_t id = 0;
  std::string name;
  Scope scope = Scope::kLocal;
  Args args;
  Span span;

  bool operator==(const ActionCall& o) const {
    return id == o.id && name == o.name && scope == o.scope && args == o.args;
  }
};

struct ActionResult {
  std::int64_t call_id = 0;
  ResultStatus status = ResultStatus::kOk;
  std::string payload;
  Span span;

  bool operator==(const ActionResult& o) const {
    return call_id == o.call_id && status == o.status && payload == o.payload;
  }
};

struct AnswerBlock {
  std::string text;
  Span span;

  bool operator==(const AnswerBlock& o) const { return text == o.text; }
};

using Item = std::variant<ThinkBlock, ActionCall, ActionResult, AnswerBlock>;

Span span_of(const Item& item) noexcept;

struct Turn {
  Role role = Role::kAssistant;
  std::vector<Item> items;

  bool operator==(const Turn&) const = default;
};

struct Trajectory {
  std::string task_id;
  std::vector<Turn> turns;
  bool terminal = false;

  bool operator==(const Trajectory&) const = default;

  // Items of all turns in document order.
  std::vector<const Item*> items() const;
  std::vector<const ActionCall*> calls() const;
  // Answer of the last assistant turn, when that turn ends in one.
  const AnswerBlock* final_answer() const;
};

struct Violation {
  ViolationKind kind = ViolationKind::kUnknownTag;
  Span span;
  std::string note;

  bool operator==(const Violation&) const = default;
};

std::size_t count_kind(const std::vector<Violation>& violations, ViolationKind kind) noexcept;

}  // namespace thinkact::protocol
