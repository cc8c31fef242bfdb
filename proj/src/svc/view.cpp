#include "thinkact/svc/view.hpp"

#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/protocol/escape.hpp"

namespace thinkact::svc {

namespace {

using nlohmann::json;
using namespace protocol;

json span_json(const Span& s) { return json::array({s.start, s.end}); }

json item_json(const Item& item) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ThinkBlock>) {
          json plans = json::array();
          for (const auto& p : x.declarations) {
            auto args = json::parse(p.args_digest, nullptr, false);
            if (args.is_discarded()) args = p.args_digest;
            plans.push_back(json{{"action", p.action_name}, {"args", args}, {"expected", p.expected}});
          }
          return json{{"type", "think"}, {"text", unescape(x.text)}, {"plans", plans}, {"span", span_json(x.span)}};
        } else if constexpr (std::is_same_v<T, ActionCall>) {
          return json{{"type", "act"},   {"id", x.id},
                      {"name", x.name},  {"scope", to_string(x.scope)},
                      {"args", json::parse(canonical_args(x.args))}, {"span", span_json(x.span)}};
        } else if constexpr (std::is_same_v<T, ActionResult>) {
          return json{{"type", "result"},
                      {"call_id", x.call_id},
                      {"status", to_string(x.status)},
                      {"payload", unescape(x.payload)},
                      {"span", span_json(x.span)}};
        } else {
          return json{{"type", "answer"}, {"text", unescape(x.text)}, {"span", span_json(x.span)}};
        }
      },
      item);
}

}  // namespace

json document_view(std::string_view document, std::string_view task_id) {
  const auto outcome = parse(document, task_id);
  json turns = json::array();
  for (const auto& turn : outcome.trajectory.turns) {
    json items = json::array();
    for (const auto& item : turn.items) items.push_back(item_json(item));
    turns.push_back(json{{"role", to_string(turn.role)}, {"items", items}});
  }
  json violations = json::array();
  for (const auto& v : outcome.violations) {
    violations.push_back(json{{"kind", to_string(v.kind)}, {"span", span_json(v.span)}, {"note", v.note}});
  }
  return json{{"turns", turns}, {"violations", violations}, {"terminal", outcome.trajectory.final_answer() != nullptr}};
}

}  // namespace thinkact::svc
