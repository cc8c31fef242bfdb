#include <random>
#include <set>

#include "doctest.h"
#include "support/generators.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/protocol/mutate.hpp"

using namespace thinkact;
using namespace thinkact::protocol;

namespace {

std::vector<ViolationKind> kinds(const std::vector<Violation>& vs) {
  std::vector<ViolationKind> out;
  for (const auto& v : vs) out.push_back(v.kind);
  return out;
}

Trajectory one_action_trajectory() {
  Trajectory t;
  t.task_id = "t1";
  t.turns.push_back(Turn{Role::kAssistant,
                         {ThinkBlock::from_text(neutralize("need a sum\n" + plan_line("calc_eval", {{"expr", std::string("2+3")}}, "5"))),
                          ActionCall{1, "calc_eval", Scope::kLocal, {{"expr", std::string("2+3")}}, {}}}});
  t.turns.push_back(Turn{Role::kRuntime, {ActionResult{1, ResultStatus::kOk, "5", {}}}});
  t.turns.push_back(Turn{Role::kAssistant, {ThinkBlock::from_text("done"), AnswerBlock{"5", {}}}});
  t.terminal = true;
  return t;
}

Trajectory answer_only_trajectory() {
  Trajectory t;
  t.turns.push_back(Turn{Role::kAssistant, {ThinkBlock::from_text("add"), AnswerBlock{"4", {}}}});
  t.terminal = true;
  return t;
}

}  // namespace

TEST_CASE("parse: minimal well-formed assistant turn") {
  const auto out = parse("<think>add</think><answer>4</answer>");
  CHECK(out.violations.empty());
  REQUIRE(out.trajectory.turns.size() == 1);
  const auto& turn = out.trajectory.turns[0];
  CHECK(turn.role == Role::kAssistant);
  REQUIRE(turn.items.size() == 2);
  CHECK(std::get<ThinkBlock>(turn.items[0]).text == "add");
  CHECK(std::get<AnswerBlock>(turn.items[1]).text == "4");
  CHECK(out.trajectory.terminal);
  CHECK(std::get<ThinkBlock>(turn.items[0]).span == Span{0, 18});
}

TEST_CASE("parse: empty input is missing its answer") {
  const auto out = parse("");
  CHECK(out.trajectory.turns.empty());
  CHECK(kinds(out.violations) == std::vector{ViolationKind::kMissingAnswer});
  CHECK(out.violations[0].span == Span{0, 0});
}

TEST_CASE("parse: unclosed think recovers at the next tag") {
  // Hand trace: <think> at [0,7); body scan stops at the '<' of <answer> (8),
  // which is not </think>, so the think element spans [0,8) and is unclosed.
  const auto out = parse("<think>x<answer>y</answer>");
  REQUIRE(out.violations.size() == 1);
  CHECK(out.violations[0].kind == ViolationKind::kUnclosedTag);
  CHECK(out.violations[0].span == Span{0, 8});
  REQUIRE(out.trajectory.turns.size() == 1);
  CHECK(std::get<ThinkBlock>(out.trajectory.turns[0].items[0]).text == "x");
  CHECK(out.trajectory.terminal);
}

TEST_CASE("parse: lexical defects") {
  SUBCASE("unknown tag") {
    const auto out = parse("<think>a</think><note><answer>b</answer>");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kUnknownTag});
    CHECK(out.violations[0].span == Span{16, 22});
  }
  SUBCASE("raw ampersand and lone angle bracket") {
    const auto out = parse("<think>a & b < c</think><answer>ok</answer>");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kBadEscape, ViolationKind::kBadEscape});
    CHECK(out.violations[0].span == Span{9, 10});
    CHECK(out.violations[1].span == Span{13, 14});
  }
  SUBCASE("stray closing tag") {
    const auto out = parse("</think><answer>ok</answer>");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kUnclosedTag});
  }
  SUBCASE("text outside tags") {
    const auto out = parse("hello <answer>ok</answer>");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kUnknownTag});
    CHECK(out.violations[0].span == Span{0, 6});
  }
  SUBCASE("malformed act attributes drop the call") {
    const auto out = parse(R"(<think>t</think><act id="0" name="x" scope="LOCAL">{}</act>)");
    CHECK(count_kind(out.violations, ViolationKind::kUnknownTag) == 1);
    CHECK(out.trajectory.calls().empty());
  }
  SUBCASE("non-scalar args") {
    const auto out = parse(R"(<think>t</think><act id="1" name="x" scope="LOCAL">[1]</act><result id="1" status="OK">r</result><answer>a</answer>)");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kBadEscape});
  }
}

TEST_CASE("parse: structural violations") {
  SUBCASE("call without think") {
    const auto out = parse(R"(<act id="1" name="x" scope="LOCAL">{}</act><result id="1" status="OK">r</result><answer>a</answer>)");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kActOutsideThinkTurn});
  }
  SUBCASE("duplicate ids") {
    const auto out = parse(R"(<think>t</think><act id="1" name="x" scope="LOCAL">{}</act><act id="1" name="y" scope="LOCAL">{}</act><answer>a</answer>)");
    // The answer shares the acting turn, hence the dual-terminal report too.
    CHECK(count_kind(out.violations, ViolationKind::kDuplicateId) == 1);
  }
  SUBCASE("orphan result") {
    const auto out = parse(R"(<result id="99" status="OK">r</result><think>t</think><answer>a</answer>)");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kOrphanResult});
  }
  SUBCASE("empty answer") {
    const auto out = parse("<think>t</think><answer>  </answer>");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kEmptyAnswer});
  }
  SUBCASE("no answer") {
    const auto out = parse(R"(<think>t</think><act id="1" name="x" scope="LOCAL">{}</act><result id="1" status="OK">r</result>)");
    CHECK(kinds(out.violations) == std::vector{ViolationKind::kMissingAnswer});
    CHECK_FALSE(out.trajectory.terminal);
  }
}

TEST_CASE("parse: size and encoding limits") {
  CHECK_THROWS_AS(parse(std::string(kMaxDocumentBytes + 1, ' ')), Error);
  try {
    parse(std::string(kMaxDocumentBytes + 1, ' '));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kOversize);
  }
  try {
    parse("<answer>\xff</answer>");
    FAIL("expected ENCODING");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kEncoding);
  }
  CHECK_NOTHROW(parse(std::string(kMaxDocumentBytes, ' ')));
}

TEST_CASE("serialize: canonical forms") {
  CHECK(serialize(Trajectory{}).empty());

  const auto parsed = parse("<think>add</think>  <answer>4</answer>");
  CHECK(serialize(parsed.trajectory) == "<think>add</think>\n<answer>4</answer>\n");

  auto t = one_action_trajectory();
  std::get<ActionResult>(t.turns[1].items[0]).payload = neutralize("</result><act id=\"2\">");
  const auto text = serialize(t);
  CHECK(text.find("&lt;act") != std::string::npos);
  CHECK(text.find("<act id=\"2\"") == std::string::npos);

  CHECK(serialize(one_action_trajectory()) ==
        "<think>need a sum\nPLAN: calc_eval {\"expr\":\"2+3\"} -&gt; 5</think>\n"
        "<act id=\"1\" name=\"calc_eval\" scope=\"LOCAL\">{\"expr\":\"2+3\"}</act>\n"
        "<result id=\"1\" status=\"OK\">5</result>\n"
        "<think>done</think>\n<answer>5</answer>\n");
}

TEST_CASE("serialize: rejects unrepresentable values") {
  auto t = answer_only_trajectory();
  std::get<AnswerBlock>(t.turns[0].items[1]).text = "a<b";
  CHECK_THROWS_AS(serialize(t), Error);

  auto u = answer_only_trajectory();
  u.turns.insert(u.turns.begin(), Turn{Role::kUser, {}});
  CHECK_THROWS_AS(serialize(u), Error);

  auto w = answer_only_trajectory();
  std::get<ThinkBlock>(w.turns[0].items[0]).declarations.push_back(PlanDecl{"x", "{}", ""});
  CHECK_THROWS_AS(serialize(w), Error);
}

TEST_CASE("validate: examples") {
  CHECK(validate(answer_only_trajectory()).empty());
  CHECK(validate(one_action_trajectory()).empty());

  SUBCASE("call and answer in one assistant turn") {
    Trajectory t;
    t.turns.push_back(Turn{Role::kAssistant,
                           {ThinkBlock::from_text("t"), ActionCall{1, "x", Scope::kLocal, {}, {}}, AnswerBlock{"a", {}}}});
    t.terminal = true;
    const auto vs = validate(t);
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].kind == ViolationKind::kMissingAnswer);
  }
  SUBCASE("two calls sharing id 1") {
    auto t = one_action_trajectory();
    auto& items = t.turns[0].items;
    items.push_back(ActionCall{1, "calc_eval", Scope::kLocal, {}, {}});
    CHECK(kinds(validate(t)) == std::vector{ViolationKind::kDuplicateId});
  }
  SUBCASE("terminal flag must match") {
    auto t = answer_only_trajectory();
    t.terminal = false;
    CHECK(kinds(validate(t)) == std::vector{ViolationKind::kMissingAnswer});
  }
  SUBCASE("runtime turns only hold results") {
    auto t = one_action_trajectory();
    t.turns[1].items.push_back(AnswerBlock{"x", {}});
    CHECK(count_kind(validate(t), ViolationKind::kActOutsideThinkTurn) == 1);
  }
  SUBCASE("unescaped text") {
    auto t = answer_only_trajectory();
    std::get<ThinkBlock>(t.turns[0].items[0]).text = "a & b";
    CHECK(kinds(validate(t)) == std::vector{ViolationKind::kBadEscape});
  }
}

TEST_CASE("validate agrees with parse on violation-free documents") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto t = testing::random_trajectory(rng);
    REQUIRE(validate(t).empty());
    const auto out = parse(serialize(t), t.task_id);
    CHECK(out.violations.empty());
    CHECK(validate(out.trajectory).empty());
  }
}

TEST_CASE("mutate: examples") {
  const auto t = one_action_trajectory();
  const auto doc = mutate(t, ViolationKind::kUnclosedTag, 1);
  CHECK(count_kind(parse(doc).violations, ViolationKind::kUnclosedTag) >= 1);

  const auto dup = mutate(t, ViolationKind::kDuplicateId, 7);
  CHECK(dup.find("<act id=\"1\"") != dup.rfind("<act id=\"1\""));
  CHECK(count_kind(parse(dup).violations, ViolationKind::kDuplicateId) >= 1);

  const auto orphan = mutate(answer_only_trajectory(), ViolationKind::kOrphanResult, 3);
  CHECK(orphan.find("<result id=\"99\"") != std::string::npos);
  const auto out = parse(orphan);
  CHECK(kinds(out.violations) == std::vector{ViolationKind::kOrphanResult});
  CHECK(validate(out.trajectory) == out.violations);

  CHECK(mutate(t, ViolationKind::kBadEscape, 5) == mutate(t, ViolationKind::kBadEscape, 5));
}

TEST_CASE("mutate: unsupported shapes and invalid input") {
  try {
    mutate(answer_only_trajectory(), ViolationKind::kDuplicateId, 0);
    FAIL("expected UNSUPPORTED_KIND");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kUnsupportedKind);
  }
  auto bad = answer_only_trajectory();
  bad.terminal = false;
  CHECK_THROWS_AS(mutate(bad, ViolationKind::kUnknownTag, 0), Error);
}

TEST_CASE("mutate: every kind is planted on random trajectories") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto t = testing::random_trajectory(rng);
    for (auto kind : kAllViolationKinds) {
      const auto seed = rng();
      std::string doc;
      try {
        doc = mutate(t, kind, seed);
      } catch (const Error& e) {
        CHECK(e.code() == Errc::kUnsupportedKind);
        CHECK(kind == ViolationKind::kDuplicateId);
        CHECK(t.calls().empty());
        continue;
      }
      const auto out = parse(doc);
      INFO(to_string(kind), "\n", doc);
      CHECK(count_kind(out.violations, kind) >= 1);
    }
  }
}

TEST_CASE("mutate: stacked injections keep every planted kind") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 300; ++i) {
      const auto t = testing::random_trajectory(rng);
      DocumentEditor editor(t);
      std::set<ViolationKind> planted;
      for (int step = 0; step < 4; ++step) {
        const auto kind = kAllViolationKinds[uniform_index(rng, std::size(kAllViolationKinds))];
        if (!editor.inject(kind, rng())) continue;
        planted.insert(kind);
        const auto out = parse(editor.text(), t.task_id);
        for (auto k : planted) {
          INFO(to_string(k), "\n", editor.text());
          CHECK(count_kind(out.violations, k) >= 1);
        }
      }
    }
  }
}

TEST_CASE("round trip over generated trajectories") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto t = testing::random_trajectory(rng);
    const auto text = serialize(t);
    const auto out = parse(text, t.task_id);
    REQUIRE(out.violations.empty());
    CHECK(out.trajectory == t);
    CHECK(serialize(out.trajectory) == text);
  }
}

TEST_CASE("parse is total over tag soup and spans stay in bounds") {
  static const std::string kTokens[] = {"<think>", "</think>", "<answer>", "</answer>", "<act id=\"1\" name=\"a\" scope=\"LOCAL\">",
                                        "</act>", "<result id=\"1\" status=\"OK\">", "</result>", "<", ">", "&", "&amp;",
                                        "x", " ", "\n", "<foo", "</", "\"", "{\"a\":1}", "<act", "=", "é"};
  std::mt19937_64 rng(77);
  for (int i = 0; i < 3000; ++i) {
    std::string doc;
    const auto n = uniform_index(rng, 40);
    for (std::size_t k = 0; k < n; ++k) doc += kTokens[uniform_index(rng, std::size(kTokens))];
    const auto out = parse(doc);
    for (const auto& v : out.violations) {
      CHECK(v.span.start <= v.span.end);
      CHECK(v.span.end <= doc.size());
    }
    CHECK(parse(doc).violations == out.violations);
    if (out.violations.empty()) CHECK(validate(out.trajectory).empty());
  }
}

TEST_CASE("plan extraction") {
  const auto plans = extract_plans("first\n  PLAN: calc_eval {\"expr\": \"1+1\"} -> 2\nPLAN: clock_now\nPLAN: Bad {}\nPLAN: x {oops");
  REQUIRE(plans.size() == 2);
  CHECK(plans[0] == PlanDecl{"calc_eval", "{\"expr\":\"1+1\"}", "2"});
  CHECK(plans[1] == PlanDecl{"clock_now", "{}", ""});
}

TEST_CASE("escaping") {
  CHECK(neutralize("<a & b>") == "&lt;a &amp; b&gt;");
  CHECK(unescape("&lt;a &amp; b&gt; &x") == "<a & b> &x");
  CHECK(escape_defects("ok &amp; &bad <") == std::vector<std::size_t>{9, 14});
  CHECK(truncate_utf8("héllo", 2) == "h");
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto raw = testing::random_raw_text(rng, 40);
    CHECK(is_neutralized(neutralize(raw)));
    CHECK(unescape(neutralize(raw)) == raw);
  }
}
