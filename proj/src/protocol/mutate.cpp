#include "thinkact/protocol/mutate.hpp"

#include <algorithm>

#include "thinkact/error.hpp"
#include "thinkact/protocol/document.hpp"

namespace thinkact::protocol {

namespace {

std::optional<TagName> tag_of(const Item& item) {
  if (std::holds_alternative<ThinkBlock>(item)) return TagName::kThink;
  if (std::holds_alternative<ActionCall>(item)) return TagName::kAct;
  if (std::holds_alternative<ActionResult>(item)) return TagName::kResult;
  return TagName::kAnswer;
}

constexpr std::int64_t kOrphanId = 99;

}  // namespace

DocumentEditor::DocumentEditor(const Trajectory& trajectory) {
  for (const Item* item : trajectory.items()) {
    auto parts = item_parts(*item);
    pieces_.push_back(Piece{tag_of(*item), std::move(parts.open), std::move(parts.body), std::move(parts.close)});
  }
}

std::vector<std::size_t> DocumentEditor::indices_of(TagName tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].tag == tag) out.push_back(i);
  }
  return out;
}

bool DocumentEditor::inject(ViolationKind kind, std::uint64_t seed) {
  const auto pick = [seed](const std::vector<std::size_t>& v) { return v[seed % v.size()]; };

  switch (kind) {
    case ViolationKind::kUnclosedTag: {
      std::vector<std::size_t> closable;
      for (std::size_t i = 0; i < pieces_.size(); ++i) {
        if (pieces_[i].tag && !pieces_[i].close.empty()) closable.push_back(i);
      }
      if (closable.empty()) return false;
      auto& p = pieces_[pick(closable)];
      p.close.clear();
      p.planted = true;
      return true;
    }
    case ViolationKind::kUnknownTag: {
      const auto at = static_cast<std::ptrdiff_t>(seed % (pieces_.size() + 1));
      pieces_.insert(pieces_.begin() + at, Piece{std::nullopt, "<note>", "", "", true});
      return true;
    }
    case ViolationKind::kActOutsideThinkTurn: {
      // First call of a turn whose think blocks can be dropped without the
      // call merging into an earlier acting turn. Unknown tags in between
      // do not separate turns, so the walk passes over them.
      const auto turn_start = [this](std::size_t i) {
        std::size_t j = i;
        while (j > 0 && (pieces_[j - 1].tag == TagName::kThink || !pieces_[j - 1].tag)) --j;
        return j;
      };
      std::vector<std::size_t> firsts;
      for (std::size_t i = 0; i < pieces_.size(); ++i) {
        if (pieces_[i].tag != TagName::kAct) continue;
        const std::size_t j = turn_start(i);
        if (j > 0 && pieces_[j - 1].tag == TagName::kAct) continue;
        bool has_think = false, planted_think = false;
        for (std::size_t k = j; k < i; ++k) {
          if (pieces_[k].tag != TagName::kThink) continue;
          has_think = true;
          planted_think = planted_think || pieces_[k].planted;
        }
        if (has_think && !planted_think) firsts.push_back(i);
      }
      if (firsts.empty()) {
        if (!indices_of(TagName::kAct).empty()) return false;
        pieces_.insert(pieces_.begin(), Piece{TagName::kAct, R"(<act id="1" name="note" scope="LOCAL">)", "{}", "</act>", true});
        return true;
      }
      const std::size_t i = pick(firsts);
      const auto first = pieces_.begin() + static_cast<std::ptrdiff_t>(turn_start(i));
      pieces_.erase(std::remove_if(first, pieces_.begin() + static_cast<std::ptrdiff_t>(i),
                                   [](const Piece& p) { return p.tag == TagName::kThink; }),
                    pieces_.begin() + static_cast<std::ptrdiff_t>(i));
      return true;
    }
    case ViolationKind::kMissingAnswer: {
      const auto answers = indices_of(TagName::kAnswer);
      if (answers.empty() || pieces_[answers.back()].planted) return false;
      pieces_.erase(pieces_.begin() + static_cast<std::ptrdiff_t>(answers.back()));
      return true;
    }
    case ViolationKind::kDuplicateId: {
      const auto acts = indices_of(TagName::kAct);
      if (acts.empty()) return false;
      const std::size_t i = pick(acts);
      auto copy = pieces_[i];
      copy.planted = true;
      pieces_.insert(pieces_.begin() + static_cast<std::ptrdiff_t>(i) + 1, std::move(copy));
      return true;
    }
    case ViolationKind::kBadEscape: {
      // An emptied answer stays empty.
      const auto open_to_edit = [this](std::vector<std::size_t> v) {
        std::erase_if(v, [this](std::size_t i) { return pieces_[i].planted && pieces_[i].body.empty(); });
        return v;
      };
      auto targets = open_to_edit(indices_of(TagName::kThink));
      if (targets.empty()) targets = open_to_edit(indices_of(TagName::kAnswer));
      if (targets.empty()) targets = open_to_edit(indices_of(TagName::kResult));
      if (targets.empty()) return false;
      auto& p = pieces_[pick(targets)];
      p.body += " &";
      p.planted = true;
      return true;
    }
    case ViolationKind::kOrphanResult: {
      pieces_.insert(pieces_.begin(), Piece{TagName::kResult, "<result id=\"" + std::to_string(kOrphanId) + "\" status=\"OK\">",
                                            "orphan", "</result>", true});
      return true;
    }
    case ViolationKind::kEmptyAnswer: {
      const auto answers = indices_of(TagName::kAnswer);
      if (answers.empty() || pieces_[answers.back()].planted) return false;
      pieces_[answers.back()].body.clear();
      pieces_[answers.back()].planted = true;
      return true;
    }
  }
  return false;
}

std::string DocumentEditor::text() const {
  std::string out;
  for (const auto& p : pieces_) {
    out += p.open;
    out += p.body;
    out += p.close;
    out += '\n';
  }
  return out;
}

std::string mutate(const Trajectory& trajectory, ViolationKind kind, std::uint64_t seed) {
  if (!validate(trajectory).empty()) {
    throw Error(Errc::kInvalidTrajectory, "mutate requires a violation-free trajectory");
  }
  DocumentEditor editor(trajectory);
  if (!editor.inject(kind, seed)) {
    throw Error(Errc::kUnsupportedKind,
                std::string(to_string(kind)) + " cannot be planted in this trajectory shape");
  }
  return editor.text();
}

}  // namespace thinkact::protocol
