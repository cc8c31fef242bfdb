#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace thinkact::protocol {

// Entity-escapes '&', '<' and '>'. Output never contains a tag opener.
std::string neutralize(std::string_view raw);

// Decodes &lt; &gt; &amp;. Anything else is copied through unchanged.
std::string unescape(std::string_view text);

// Offsets of escape defects: a raw '<', or an '&' that does not start one of
// the three recognised entities.
std::vector<std::size_t> escape_defects(std::string_view text);

inline bool is_neutralized(std::string_view text) { return escape_defects(text).empty(); }

// Cuts `text` to at most `max_bytes` without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view text, std::size_t max_bytes);

}  // namespace thinkact::protocol
