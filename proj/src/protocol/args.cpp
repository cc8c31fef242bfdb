#include "thinkact/protocol/args.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "thinkact/error.hpp"
#include "thinkact/util.hpp"

namespace thinkact::protocol {

namespace {

using nlohmann::json;

json to_json_value(const ArgValue& value) {
  return std::visit([](const auto& v) { return json(v); }, value);
}

// Index just past the JSON object starting at text[pos] == '{', honouring
// string literals; npos when unbalanced.
std::size_t object_end(std::string_view text, std::size_t pos) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = pos; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace

bool args_are_finite(const Args& args) noexcept {
  for (const auto& [key, value] : args) {
    if (const auto* d = std::get_if<double>(&value); d != nullptr && !std::isfinite(*d)) return false;
  }
  return true;
}

std::string canonical_args(const Args& args) {
  if (!args_are_finite(args)) {
    throw Error(Errc::kInvalidTrajectory, "action arguments must be finite");
  }
  json obj = json::object();
  for (const auto& [key, value] : args) obj[key] = to_json_value(value);
  try {
    return obj.dump();
  } catch (const json::exception&) {
    throw Error(Errc::kInvalidTrajectory, "action arguments must be valid UTF-8");
  }
}

std::optional<Args> parse_args(std::string_view text) {
  if (trim(text).empty()) return Args{};
  json obj = json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
  if (!obj.is_object()) return std::nullopt;
  Args out;
  for (const auto& [key, value] : obj.items()) {
    if (value.is_boolean()) {
      out.emplace(key, value.get<bool>());
    } else if (value.is_number_unsigned()) {
      const auto u = value.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) return std::nullopt;
      out.emplace(key, static_cast<std::int64_t>(u));
    } else if (value.is_number_integer()) {
      out.emplace(key, value.get<std::int64_t>());
    } else if (value.is_number_float()) {
      const auto d = value.get<double>();
      if (!std::isfinite(d)) return std::nullopt;
      out.emplace(key, d);
    } else if (value.is_string()) {
      out.emplace(key, value.get<std::string>());
    } else {
      return std::nullopt;
    }
  }
  return out;
}

std::vector<PlanDecl> extract_plans(std::string_view unescaped_text) {
  constexpr std::string_view kPrefix = "PLAN:";
  std::vector<PlanDecl> out;
  std::size_t line_start = 0;
  while (line_start <= unescaped_text.size()) {
    auto line_end = unescaped_text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = unescaped_text.size();
    auto line = trim(unescaped_text.substr(line_start, line_end - line_start));
    line_start = line_end + 1;

    if (line.substr(0, kPrefix.size()) != kPrefix) continue;
    auto rest = trim(line.substr(kPrefix.size()));
    std::size_t name_len = 0;
    while (name_len < rest.size() && rest[name_len] != ' ' && rest[name_len] != '{' && rest[name_len] != '\t') {
      ++name_len;
    }
    const auto name = rest.substr(0, name_len);
    if (!is_identifier(name)) continue;
    rest = trim(rest.substr(name_len));

    std::string digest = "{}";
    if (!rest.empty() && rest.front() == '{') {
      const auto end = object_end(rest, 0);
      if (end == std::string_view::npos) continue;
      auto parsed = parse_args(rest.substr(0, end));
      if (!parsed || !args_are_finite(*parsed)) continue;
      digest = canonical_args(*parsed);
      rest = trim(rest.substr(end));
    }
    std::string expected;
    if (rest.substr(0, 2) == "->") {
      expected = std::string(trim(rest.substr(2)));
    } else if (!rest.empty()) {
      continue;
    }
    out.push_back(PlanDecl{std::string(name), std::move(digest), std::move(expected)});
  }
  return out;
}

std::string plan_line(std::string_view action_name, const Args& args, std::string_view expected) {
  std::string line = "PLAN: ";
  line += action_name;
  line += ' ';
  line += canonical_args(args);
  if (!expected.empty()) {
    line += " -> ";
    line += expected;
  }
  return line;
}

}  // namespace thinkact::protocol
