#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "thinkact/protocol/types.hpp"

namespace thinkact::protocol {

inline constexpr std::size_t kMaxDocumentBytes = std::size_t{1} << 20;

struct ParseOutcome {
  Trajectory trajectory;
  std::vector<Violation> violations;
};

// Best-effort parse with error recovery; every defect found is reported.
// The document carries no task id, so the caller supplies it.
// Throws Error(kOversize) above kMaxDocumentBytes and Error(kEncoding) on
// invalid UTF-8; any other input yields an outcome.
ParseOutcome parse(std::string_view document, std::string_view task_id = {});

// Canonical text: one item per line, each line terminated by '\n'.
// Throws Error(kInvalidTrajectory) when an item cannot be written faithfully
// (unescaped text, malformed call, user turns, declarations out of sync).
std::string serialize(const Trajectory& trajectory);

// Structural and content checks; empty iff the trajectory is well formed.
std::vector<Violation> validate(const Trajectory& trajectory);

// Groups a flat item stream into turns: results form RUNTIME turns, and a new
// ASSISTANT turn starts after an answer or when a think follows a call.
std::vector<Turn> segment_turns(std::vector<Item> items);

// Open tag, body and closing tag of an item in canonical form.
struct ItemParts {
  std::string open;
  std::string body;
  std::string close;
};

ItemParts item_parts(const Item& item);

}  // namespace thinkact::protocol
