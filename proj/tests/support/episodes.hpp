#pragma once

// Hand-built action episodes for reward tests.

#include <string>
#include <vector>

#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/protocol/types.hpp"

namespace thinkact::testing {

struct Step {
  std::string name;
  protocol::Args args;
  std::string payload;  // raw
  bool declared = true;
  protocol::ResultStatus status = protocol::ResultStatus::kOk;
};

// think (optional PLAN) -> act -> result for every step, then think + answer.
inline protocol::Trajectory episode(const std::vector<Step>& steps, const std::string& answer,
                                    const std::string& task_id = "t1") {
  using namespace protocol;
  std::vector<Item> items;
  std::int64_t id = 1;
  for (const auto& s : steps) {
    const std::string thought = s.declared ? plan_line(s.name, s.args, s.payload) : "just do it";
    items.emplace_back(ThinkBlock::from_text(neutralize(thought)));
    items.emplace_back(ActionCall{id, s.name, Scope::kLocal, s.args, {}});
    items.emplace_back(ActionResult{id, s.status, neutralize(s.payload), {}});
    ++id;
  }
  items.emplace_back(ThinkBlock::from_text("answering"));
  items.emplace_back(AnswerBlock{neutralize(answer), {}});
  return Trajectory{task_id, segment_turns(std::move(items)), true};
}

}  // namespace thinkact::testing
