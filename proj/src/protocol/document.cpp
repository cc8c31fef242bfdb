#include "thinkact/protocol/document.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <utility>

#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/util.hpp"

namespace thinkact::protocol {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_name_char(char c) { return is_alpha(c) || (c >= '0' && c <= '9') || c == '_' || c == '-' || c == ':'; }

std::optional<std::int64_t> parse_id(std::string_view text) {
  if (text.empty() || text.size() > 18 || text[0] == '0') return std::nullopt;
  std::int64_t value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
  }
  return value;
}

Span last_span(const std::vector<Turn>& turns) {
  for (auto t = turns.rbegin(); t != turns.rend(); ++t) {
    if (!t->items.empty()) return span_of(t->items.back());
  }
  return {};
}

Span first_span(const Turn& turn) { return turn.items.empty() ? Span{} : span_of(turn.items.front()); }

// Turn-shape, id, result-matching and terminal checks shared by parse() and
// validate(). `end_span` locates whole-document violations.
void check_structure(const Trajectory& t, Span end_span, std::vector<Violation>& out) {
  const auto add = [&out](ViolationKind kind, Span span, std::string note) {
    out.push_back(Violation{kind, span, std::move(note)});
  };

  std::size_t last_assistant = t.turns.size();
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    if (t.turns[i].role == Role::kAssistant) last_assistant = i;
  }

  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    const Turn& turn = t.turns[i];
    const Turn* prev = i > 0 ? &t.turns[i - 1] : nullptr;
    switch (turn.role) {
      case Role::kUser:
        add(ViolationKind::kActOutsideThinkTurn, first_span(turn), "user turns do not belong in a transcript");
        break;
      case Role::kRuntime:
        if (turn.items.empty()) add(ViolationKind::kActOutsideThinkTurn, {}, "empty runtime turn");
        if (prev != nullptr && prev->role == Role::kRuntime) {
          add(ViolationKind::kActOutsideThinkTurn, first_span(turn), "adjacent runtime turns");
        }
        for (const auto& item : turn.items) {
          if (!std::holds_alternative<ActionResult>(item)) {
            add(ViolationKind::kActOutsideThinkTurn, span_of(item), "runtime turns hold only action results");
          }
        }
        break;
      case Role::kAssistant: {
        bool seen_think = false;
        bool seen_act = false;
        bool flagged_unthought = false;
        int answers = 0;
        for (const auto& item : turn.items) {
          if (std::holds_alternative<ThinkBlock>(item)) {
            if (seen_act || answers > 0) {
              add(ViolationKind::kActOutsideThinkTurn, span_of(item), "think block after the turn's terminal item");
            }
            seen_think = true;
          } else if (std::holds_alternative<ActionCall>(item)) {
            if (!seen_think && !flagged_unthought) {
              add(ViolationKind::kActOutsideThinkTurn, span_of(item), "action call without a preceding think block");
              flagged_unthought = true;
            }
            seen_act = true;
          } else if (std::holds_alternative<AnswerBlock>(item)) {
            ++answers;
          } else {
            add(ViolationKind::kActOutsideThinkTurn, span_of(item), "action result inside an assistant turn");
          }
        }
        if (seen_act && answers > 0) {
          add(ViolationKind::kMissingAnswer, first_span(turn), "turn has both action calls and an answer");
        } else if (answers > 1) {
          add(ViolationKind::kMissingAnswer, first_span(turn), "turn has more than one answer");
        } else if (!seen_act && answers == 0 && i != last_assistant) {
          add(ViolationKind::kMissingAnswer, first_span(turn), "turn ends without an action call or an answer");
        }
        if (prev != nullptr && prev->role == Role::kAssistant && !prev->items.empty() &&
            std::holds_alternative<ActionCall>(prev->items.back()) && !turn.items.empty() &&
            std::holds_alternative<AnswerBlock>(turn.items.front())) {
          add(ViolationKind::kMissingAnswer, first_span(turn), "answer issued while action calls are pending");
        }
        break;
      }
    }
  }

  std::set<std::int64_t> ids;
  std::set<std::int64_t> answered;
  std::int64_t max_id = 0;
  for (const Item* item : t.items()) {
    if (const auto* call = std::get_if<ActionCall>(item)) {
      if (ids.count(call->id) != 0) {
        add(ViolationKind::kDuplicateId, call->span, "action id " + std::to_string(call->id) + " reused");
      } else if (call->id <= max_id) {
        add(ViolationKind::kDuplicateId, call->span, "action ids must increase in document order");
      }
      ids.insert(call->id);
      max_id = std::max(max_id, call->id);
    } else if (const auto* result = std::get_if<ActionResult>(item)) {
      if (ids.count(result->call_id) == 0) {
        add(ViolationKind::kOrphanResult, result->span,
            "result for unknown action id " + std::to_string(result->call_id));
      } else if (!answered.insert(result->call_id).second) {
        add(ViolationKind::kOrphanResult, result->span,
            "second result for action id " + std::to_string(result->call_id));
      }
    } else if (const auto* answer = std::get_if<AnswerBlock>(item)) {
      if (trim(answer->text).empty()) add(ViolationKind::kEmptyAnswer, answer->span, "answer is empty");
    }
  }

  const bool terminal = t.final_answer() != nullptr;
  if (!terminal) {
    add(ViolationKind::kMissingAnswer, end_span, "transcript does not end in an answer");
  } else if (!t.terminal) {
    add(ViolationKind::kMissingAnswer, end_span, "terminal flag disagrees with the final turn");
  }
}

// Checks that parse() performs lexically; only needed for values built in code.
void check_content(const Trajectory& t, std::vector<Violation>& out) {
  for (const Item* item : t.items()) {
    const Span span = span_of(*item);
    const auto check_text = [&](std::string_view text) {
      if (!is_neutralized(text)) out.push_back(Violation{ViolationKind::kBadEscape, span, "text is not neutralized"});
    };
    if (const auto* think = std::get_if<ThinkBlock>(item)) {
      check_text(think->text);
    } else if (const auto* answer = std::get_if<AnswerBlock>(item)) {
      check_text(answer->text);
    } else if (const auto* result = std::get_if<ActionResult>(item)) {
      check_text(result->payload);
    } else if (const auto* call = std::get_if<ActionCall>(item)) {
      if (call->id <= 0 || !is_identifier(call->name)) {
        out.push_back(Violation{ViolationKind::kUnknownTag, span, "malformed action call"});
      }
      if (!args_are_finite(call->args)) {
        out.push_back(Violation{ViolationKind::kBadEscape, span, "action arguments are not finite"});
      }
    }
  }
}

struct TagToken {
  std::size_t start = 0;
  std::size_t end = 0;  // one past '>'
  bool closing = false;
  bool well_formed = true;
  std::string_view name;
  std::vector<std::pair<std::string_view, std::string_view>> attrs;
};

class Parser {
 public:
  explicit Parser(std::string_view doc) : doc_(doc) {}

  ParseOutcome run(std::string_view task_id) {
    std::vector<Item> items;
    while (pos_ < doc_.size()) {
      const char c = doc_[pos_];
      if (is_space(c)) {
        ++pos_;
        continue;
      }
      if (!tag_like(pos_)) {
        const std::size_t start = pos_;
        pos_ = next_tag(pos_ + 1);
        add(ViolationKind::kUnknownTag, start, pos_, "text outside protocol tags");
        continue;
      }
      auto token = lex_tag(pos_);
      if (!token) {
        const std::size_t start = pos_;
        pos_ = next_tag(pos_ + 1);
        add(ViolationKind::kUnclosedTag, start, pos_, "unterminated tag");
        continue;
      }
      const auto tag = tag_from_string(token->name);
      if (token->closing) {
        if (tag) {
          add(ViolationKind::kUnclosedTag, token->start, token->end, "closing tag without a matching opener");
        } else {
          add(ViolationKind::kUnknownTag, token->start, token->end, "unknown closing tag");
        }
        pos_ = token->end;
        continue;
      }
      if (!tag) {
        add(ViolationKind::kUnknownTag, token->start, token->end, "unknown tag");
        pos_ = token->end;
        continue;
      }
      if (auto item = element(*token, *tag)) items.push_back(std::move(*item));
    }

    ParseOutcome out;
    out.trajectory.task_id = std::string(task_id);
    out.trajectory.turns = segment_turns(std::move(items));
    out.trajectory.terminal = out.trajectory.final_answer() != nullptr;
    out.violations = std::move(violations_);
    check_structure(out.trajectory, Span{doc_.size(), doc_.size()}, out.violations);
    return out;
  }

 private:
  void add(ViolationKind kind, std::size_t start, std::size_t end, std::string note) {
    violations_.push_back(Violation{kind, Span{start, end}, std::move(note)});
  }

  bool tag_like(std::size_t p) const {
    if (doc_[p] != '<' || p + 1 >= doc_.size()) return false;
    if (is_alpha(doc_[p + 1])) return true;
    return doc_[p + 1] == '/' && p + 2 < doc_.size() && is_alpha(doc_[p + 2]);
  }

  std::size_t next_tag(std::size_t from) const {
    for (std::size_t p = from; p < doc_.size(); ++p) {
      if (doc_[p] == '<' && tag_like(p)) return p;
    }
    return doc_.size();
  }

  // nullopt when the tag has no '>' before the next '<' or end of input.
  std::optional<TagToken> lex_tag(std::size_t p) const {
    TagToken tok;
    tok.start = p;
    std::size_t gt = std::string_view::npos;
    for (std::size_t q = p + 1; q < doc_.size(); ++q) {
      if (doc_[q] == '<') return std::nullopt;
      if (doc_[q] == '>') {
        gt = q;
        break;
      }
    }
    if (gt == std::string_view::npos) return std::nullopt;
    tok.end = gt + 1;

    std::size_t q = p + 1;
    if (doc_[q] == '/') {
      tok.closing = true;
      ++q;
    }
    const std::size_t name_start = q;
    while (q < gt && is_name_char(doc_[q])) ++q;
    tok.name = doc_.substr(name_start, q - name_start);

    while (q < gt) {
      if (is_space(doc_[q])) {
        ++q;
        continue;
      }
      const std::size_t attr_start = q;
      while (q < gt && (is_alpha(doc_[q]) || doc_[q] == '_')) ++q;
      const auto attr = doc_.substr(attr_start, q - attr_start);
      if (attr.empty() || q >= gt || doc_[q] != '=' || q + 1 >= gt || doc_[q + 1] != '"') {
        tok.well_formed = false;
        break;
      }
      q += 2;
      const std::size_t value_start = q;
      while (q < gt && doc_[q] != '"') ++q;
      if (q >= gt) {
        tok.well_formed = false;
        break;
      }
      tok.attrs.emplace_back(attr, doc_.substr(value_start, q - value_start));
      ++q;
      if (q < gt && !is_space(doc_[q])) {
        tok.well_formed = false;
        break;
      }
    }
    if (tok.closing && !tok.attrs.empty()) tok.well_formed = false;
    return tok;
  }

  std::optional<std::string_view> attr(const TagToken& tok, std::string_view key) const {
    for (const auto& [k, v] : tok.attrs) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

  bool attrs_exactly(const TagToken& tok, std::initializer_list<std::string_view> keys) const {
    if (!tok.well_formed || tok.attrs.size() != keys.size()) return false;
    std::set<std::string_view> seen;
    for (const auto& [k, v] : tok.attrs) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end() || !seen.insert(k).second) return false;
    }
    return true;
  }

  std::optional<Item> element(const TagToken& tok, TagName tag) {
    const std::size_t body_start = tok.end;
    const std::size_t body_end = next_tag(body_start);
    std::string closer = "</";
    closer += to_string(tag);
    closer += '>';
    const bool closed = doc_.compare(body_end, closer.size(), closer) == 0;
    const std::size_t item_end = closed ? body_end + closer.size() : body_end;
    pos_ = item_end;

    if (!closed) add(ViolationKind::kUnclosedTag, tok.start, body_end, "missing </" + std::string(to_string(tag)) + ">");
    const std::string_view body = doc_.substr(body_start, body_end - body_start);
    for (const auto d : escape_defects(body)) {
      add(ViolationKind::kBadEscape, body_start + d, body_start + d + 1, "unescaped character in text");
    }
    const Span span{tok.start, item_end};

    switch (tag) {
      case TagName::kThink:
      case TagName::kAnswer: {
        if (!attrs_exactly(tok, {})) add(ViolationKind::kUnknownTag, tok.start, tok.end, "unexpected attributes");
        if (tag == TagName::kThink) {
          auto block = ThinkBlock::from_text(std::string(body));
          block.span = span;
          return block;
        }
        return AnswerBlock{std::string(body), span};
      }
      case TagName::kAct: {
        std::optional<std::int64_t> id;
        std::optional<Scope> scope;
        std::string_view name;
        if (attrs_exactly(tok, {"id", "name", "scope"})) {
          id = parse_id(*attr(tok, "id"));
          scope = scope_from_string(*attr(tok, "scope"));
          name = *attr(tok, "name");
        }
        if (!id || !scope || !is_identifier(name)) {
          add(ViolationKind::kUnknownTag, tok.start, tok.end, "malformed act attributes");
          return std::nullopt;
        }
        auto args = parse_args(unescape(body));
        if (!args) {
          add(ViolationKind::kBadEscape, body_start, body_end, "action arguments are not a scalar JSON object");
          args = Args{};
        }
        return ActionCall{*id, std::string(name), *scope, std::move(*args), span};
      }
      case TagName::kResult: {
        std::optional<std::int64_t> id;
        std::optional<ResultStatus> status;
        if (attrs_exactly(tok, {"id", "status"})) {
          id = parse_id(*attr(tok, "id"));
          status = status_from_string(*attr(tok, "status"));
        }
        if (!id || !status) {
          add(ViolationKind::kUnknownTag, tok.start, tok.end, "malformed result attributes");
          return std::nullopt;
        }
        return ActionResult{*id, *status, std::string(body), span};
      }
    }
    return std::nullopt;
  }

  std::string_view doc_;
  std::size_t pos_ = 0;
  std::vector<Violation> violations_;
};

}  // namespace

std::vector<Turn> segment_turns(std::vector<Item> items) {
  std::vector<Turn> turns;
  for (auto& item : items) {
    if (std::holds_alternative<ActionResult>(item)) {
      if (turns.empty() || turns.back().role != Role::kRuntime) turns.push_back(Turn{Role::kRuntime, {}});
    } else {
      bool fresh = turns.empty() || turns.back().role != Role::kAssistant;
      if (!fresh) {
        const Item& last = turns.back().items.back();
        fresh = std::holds_alternative<AnswerBlock>(last) ||
                (std::holds_alternative<ThinkBlock>(item) && std::holds_alternative<ActionCall>(last));
      }
      if (fresh) turns.push_back(Turn{Role::kAssistant, {}});
    }
    turns.back().items.push_back(std::move(item));
  }
  return turns;
}

ParseOutcome parse(std::string_view document, std::string_view task_id) {
  if (document.size() > kMaxDocumentBytes) {
    throw Error(Errc::kOversize, "document exceeds " + std::to_string(kMaxDocumentBytes) + " bytes");
  }
  if (!is_valid_utf8(document)) throw Error(Errc::kEncoding, "document is not valid UTF-8");
  return Parser(document).run(task_id);
}

std::vector<Violation> validate(const Trajectory& trajectory) {
  std::vector<Violation> out;
  check_content(trajectory, out);
  check_structure(trajectory, last_span(trajectory.turns), out);
  return out;
}

ItemParts item_parts(const Item& item) {
  ItemParts parts;
  if (const auto* think = std::get_if<ThinkBlock>(&item)) {
    parts = {"<think>", think->text, "</think>"};
  } else if (const auto* call = std::get_if<ActionCall>(&item)) {
    parts.open = "<act id=\"" + std::to_string(call->id) + "\" name=\"" + call->name + "\" scope=\"" +
                 std::string(to_string(call->scope)) + "\">";
    parts.body = neutralize(canonical_args(call->args));
    parts.close = "</act>";
  } else if (const auto* result = std::get_if<ActionResult>(&item)) {
    parts.open = "<result id=\"" + std::to_string(result->call_id) + "\" status=\"" +
                 std::string(to_string(result->status)) + "\">";
    parts.body = result->payload;
    parts.close = "</result>";
  } else if (const auto* answer = std::get_if<AnswerBlock>(&item)) {
    parts = {"<answer>", answer->text, "</answer>"};
  }
  return parts;
}

std::string serialize(const Trajectory& trajectory) {
  std::vector<Violation> content;
  check_content(trajectory, content);
  if (!content.empty()) throw Error(Errc::kInvalidTrajectory, content.front().note);

  std::string out;
  for (const auto& turn : trajectory.turns) {
    if (turn.role == Role::kUser) throw Error(Errc::kInvalidTrajectory, "user turns cannot be serialized");
    for (const auto& item : turn.items) {
      if (const auto* think = std::get_if<ThinkBlock>(&item);
          think != nullptr && think->declarations != extract_plans(unescape(think->text))) {
        throw Error(Errc::kInvalidTrajectory, "think block declarations do not match its text");
      }
      const auto parts = item_parts(item);
      out += parts.open;
      out += parts.body;
      out += parts.close;
      out += '\n';
    }
  }
  return out;
}

}  // namespace thinkact::protocol
