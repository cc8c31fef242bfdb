#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "thinkact/protocol/types.hpp"

namespace thinkact::reward {

enum class TaskKind { kAction, kReasoning, kOther };

std::string_view to_string(TaskKind kind) noexcept;
std::optional<TaskKind> task_kind_from_string(std::string_view text) noexcept;

// A scored unit: the document as produced, its parse and its violations.
struct Candidate {
  std::string id;  // trajectory id, may be empty
  std::string document;
  protocol::Trajectory trajectory;
  std::vector<protocol::Violation> violations;

  // Throws whatever protocol::parse throws (oversize, encoding).
  static Candidate from_document(std::string document, std::string_view task_id, std::string id = {});
  // Serializes and validates; throws Error(kInvalidTrajectory) if the
  // trajectory cannot be written.
  static Candidate from_trajectory(protocol::Trajectory trajectory, std::string id = {});

  std::string content_hash() const;
};

}  // namespace thinkact::reward
