#include "thinkact/protocol/escape.hpp"

namespace thinkact::protocol {

namespace {

constexpr std::string_view kEntities[] = {"&lt;", "&gt;", "&amp;"};

std::size_t entity_length_at(std::string_view text, std::size_t pos) {
  for (auto e : kEntities) {
    if (text.substr(pos, e.size()) == e) return e.size();
  }
  return 0;
}

}  // namespace

std::string neutralize(std::string_view raw) {
  std::string out;
  out.reserve(raw.size() + raw.size() / 8);
  for (char c : raw) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '&') {
      const auto len = entity_length_at(text, i);
      if (len != 0) {
        const auto e = text.substr(i, len);
        out += e == "&lt;" ? '<' : e == "&gt;" ? '>' : '&';
        i += len;
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

std::vector<std::size_t> escape_defects(std::string_view text) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '<') {
      out.push_back(i);
    } else if (text[i] == '&' && entity_length_at(text, i) == 0) {
      out.push_back(i);
    }
  }
  return out;
}

std::string truncate_utf8(std::string_view text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return std::string(text);
  std::size_t cut = max_bytes;
  // Back off continuation bytes so the cut lands on a sequence boundary.
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return std::string(text.substr(0, cut));
}

}  // namespace thinkact::protocol
