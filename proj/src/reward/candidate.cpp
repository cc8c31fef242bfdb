#include "thinkact/reward/candidate.hpp"

#include "thinkact/protocol/document.hpp"
#include "thinkact/util.hpp"

namespace thinkact::reward {

std::string_view to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::kAction: return "ACTION";
    case TaskKind::kReasoning: return "REASONING";
    case TaskKind::kOther: return "OTHER";
  }
  return "?";
}

std::optional<TaskKind> task_kind_from_string(std::string_view text) noexcept {
  for (auto k : {TaskKind::kAction, TaskKind::kReasoning, TaskKind::kOther}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

Candidate Candidate::from_document(std::string document, std::string_view task_id, std::string id) {
  auto outcome = protocol::parse(document, task_id);
  return Candidate{std::move(id), std::move(document), std::move(outcome.trajectory), std::move(outcome.violations)};
}

Candidate Candidate::from_trajectory(protocol::Trajectory trajectory, std::string id) {
  auto document = protocol::serialize(trajectory);
  auto violations = protocol::validate(trajectory);
  return Candidate{std::move(id), std::move(document), std::move(trajectory), std::move(violations)};
}

std::string Candidate::content_hash() const { return thinkact::content_hash(document); }

}  // namespace thinkact::reward
