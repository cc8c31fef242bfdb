#pragma once

#include <string_view>

#include "json.hpp"

namespace thinkact::svc {

// Parse tree of a document for display: turns with typed items (text
// unescaped, spans as [start, end]) and the violations found. Clients render
// this instead of parsing the markup themselves.
// Throws what protocol::parse throws.
nlohmann::json document_view(std::string_view document, std::string_view task_id = {});

}  // namespace thinkact::svc
