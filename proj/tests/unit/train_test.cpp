#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "support/episodes.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/mutate.hpp"
#include "thinkact/reward/compose.hpp"
#include "thinkact/reward/scorers.hpp"
#include "thinkact/train/optimize.hpp"
#include "thinkact/util.hpp"

using namespace thinkact;
using namespace thinkact::train;
using reward::TaskKind;
using testing::episode;
using testing::Step;

namespace {

Errc code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::kIo;
}

const data::Mix kDefaultMix = {{TaskKind::kAction, 0.5}, {TaskKind::kReasoning, 0.3}, {TaskKind::kOther, 0.2}};

std::vector<data::ActionTask> tasks_of(TaskKind kind, std::size_t n, std::uint64_t seed) {
  return data::generate_tasks(n, seed, {{kind, 1.0}});
}

const PolicyParams kGood = PolicyParams::uniform(50, 50, -50);
const PolicyParams kBad = PolicyParams::uniform(-50, -50, -50);

Sample hand_sample(const std::string& task_id, protocol::Trajectory t, std::string gold) {
  Sample s;
  s.task_id = task_id;
  s.kind = TaskKind::kAction;
  s.gold = std::move(gold);
  t.task_id = task_id;
  s.candidate = reward::Candidate::from_trajectory(std::move(t), task_id + "_x");
  return s;
}

Step calc(std::string expr, std::string value, bool declared) {
  return Step{"calc_eval", {{"expr", std::move(expr)}}, std::move(value), declared};
}

// Oracle scores of 1.0, 0.5 and 0.0 for a one-step "1+1" task.
protocol::Trajectory full() { return episode({calc("1+1", "2", true)}, "2"); }
protocol::Trajectory half() { return episode({calc("1+1", "2", false)}, "2"); }
protocol::Trajectory none() { return episode({calc("1+1", "2", false)}, "3"); }

double naive_logprob(const std::vector<double>& theta, const std::vector<Draw>& draws) {
  double lp = 0.0;
  for (const auto& d : draws) {
    const double p = 1.0 / (1.0 + std::exp(-theta[d.param]));
    lp += std::log(d.value ? p : 1.0 - p);
  }
  return lp;
}

}  // namespace

TEST_CASE("PolicyParams: checks and checkpoint round trip") {
  CHECK_NOTHROW(PolicyParams{}.check());
  CHECK(theta_names().size() == kThetaSize);
  auto p = PolicyParams::uniform(1.5, -2, 0.25);
  p.version = 7;
  CHECK(PolicyParams::from_json(p.to_json()) == p);

  auto wide = p;
  wide.theta[0] = 50.5;
  CHECK(code_of([&] { wide.check(); }) == Errc::kInvalidArgument);
  auto nan = p;
  nan.theta[3] = std::nan("");
  CHECK(code_of([&] { nan.check(); }) == Errc::kInvalidArgument);
  auto j = p.to_json();
  j["theta"].erase(0);
  CHECK(code_of([&] { PolicyParams::from_json(j); }) == Errc::kSchema);
}

TEST_CASE("sample: saturated policies") {
  const auto tasks = data::generate_tasks(30, 4, kDefaultMix);
  const auto good = sample(kGood, tasks, 3, 1);
  REQUIRE(good.samples.size() == 90);
  for (const auto& s : good.samples) {
    CHECK(reward::format_reward(s.candidate.violations) == 1.0);
    if (s.kind == TaskKind::kAction) CHECK(reward::consistency_oracle(s.candidate.trajectory, s.gold) == 1.0);
    if (s.kind == TaskKind::kReasoning) CHECK(reward::rule_reward(s.candidate.trajectory, s.gold, 1e-6) == 1.0);
  }

  const auto bad = sample(kBad, tasks_of(TaskKind::kAction, 20, 5), 2, 1);
  for (const auto& s : bad.samples) {
    REQUIRE(!s.candidate.trajectory.calls().empty());
    CHECK(s.candidate.violations.empty());
    CHECK(reward::consistency_oracle(s.candidate.trajectory, s.gold) == 0.0);
  }
}

TEST_CASE("sample: determinism, shape and errors") {
  const auto tasks = data::generate_tasks(12, 9, kDefaultMix);
  const auto a = sample(PolicyParams{}, tasks, 3, 42);
  const auto b = sample(PolicyParams{}, tasks, 3, 42);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].candidate.document == b.samples[i].candidate.document);
    CHECK(a.samples[i].draws == b.samples[i].draws);
    CHECK(a.samples[i].logprob == b.samples[i].logprob);
  }
  const auto c = sample(PolicyParams{}, tasks, 3, 43);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) differ += a.samples[i].draws != c.samples[i].draws;
  CHECK(differ > 0);

  CHECK(a.trajectories().size() == a.samples.size());
  CHECK(a.task_refs().size() == a.samples.size());
  CHECK(a.task_refs()[3] == tasks[1].task_id);
  for (double lp : a.logprobs()) CHECK((std::isfinite(lp) && lp <= 0.0));

  CHECK(code_of([] { sample(PolicyParams{}, {}, 2, 0); }) == Errc::kEmptyTasks);
  CHECK(code_of([&] { sample(PolicyParams{}, tasks, 0, 0); }) == Errc::kInvalidArgument);
}

TEST_CASE("sample: recorded log-probability matches the draws") {
  const auto tasks = data::generate_tasks(40, 3, kDefaultMix);
  auto policy = PolicyParams::uniform(0.7, -1.3, -2.0);
  policy.theta[kViolationBase + 2] = 1.1;
  const auto batch = sample(policy, tasks, 4, 8);
  for (const auto& s : batch.samples) CHECK(s.logprob == doctest::Approx(naive_logprob(policy.theta, s.draws)).epsilon(1e-12));

  // Under the neutral policy every draw is a fair coin.
  for (const auto& s : sample(PolicyParams{}, tasks, 2, 8).samples) {
    CHECK(s.logprob == doctest::Approx(-std::log(2.0) * static_cast<double>(s.draws.size())).epsilon(1e-12));
  }
}

TEST_CASE("sample: draws explain the trajectory") {
  const auto tasks = data::generate_tasks(60, 21, kDefaultMix);
  const auto batch = sample(PolicyParams::uniform(0, 0, -50), tasks, 4, 2);
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    const auto& task = tasks[i / 4];
    std::size_t declare_draws = 0, declared = 0;
    const Draw* answer = nullptr;
    for (const auto& d : s.draws) {
      if (d.param < kAnswerIndex) {
        ++declare_draws;
        declared += d.value;
      }
      if (d.param == kAnswerIndex) answer = &d;
      if (d.param >= kViolationBase) CHECK(!d.value);
    }
    CHECK(declare_draws == task.required_actions.size());
    CHECK(s.candidate.violations.empty());
    if (task.kind == TaskKind::kOther) {
      CHECK(answer == nullptr);
      continue;
    }
    REQUIRE(answer != nullptr);
    const auto& t = s.candidate.trajectory;
    if (!task.required_actions.empty()) {
      CHECK(reward::declared_fraction(t) ==
            doctest::Approx(static_cast<double>(declared) / static_cast<double>(task.required_actions.size())));
    }
    const auto bit = task.kind == TaskKind::kAction ? reward::consistency_oracle(t, s.gold) * 2 - reward::declared_fraction(t)
                                                    : reward::rule_reward(t, s.gold, 1e-6);
    CHECK(bit == doctest::Approx(answer->value ? 1.0 : 0.0));
  }
}

TEST_CASE("make_pairs: examples") {
  SUBCASE("scores {1.0, 0.5} give one label") {
    SampleBatch batch;
    batch.samples = {hand_sample("t1", half(), "2"), hand_sample("t1", full(), "2")};
    const auto labels = make_pairs(batch);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].winner().document == batch.samples[1].candidate.document);
    CHECK(labels[0].source == reward::LabelSource::kOracle);
  }
  SUBCASE("scores {1.0, 1.0, 0.0} give two labels") {
    SampleBatch batch;
    batch.samples = {hand_sample("t1", full(), "2"), hand_sample("t1", full(), "2"), hand_sample("t1", none(), "2")};
    const auto labels = make_pairs(batch);
    REQUIRE(labels.size() == 2);
    for (const auto& l : labels) CHECK(reward::consistency_oracle(l.loser().trajectory, "2") == 0.0);
  }
  SUBCASE("one sample per task gives nothing") {
    SampleBatch batch;
    batch.samples = {hand_sample("t1", full(), "2"), hand_sample("t2", none(), "2")};
    CHECK(make_pairs(batch).empty());
  }
  SUBCASE("samples without an answer are not labeled") {
    SampleBatch batch;
    batch.samples = {hand_sample("t1", full(), "2"), hand_sample("t1", none(), "2")};
    auto open = batch.samples[1];
    protocol::DocumentEditor editor(full());
    REQUIRE(editor.inject(protocol::ViolationKind::kMissingAnswer, 1));
    open.candidate = reward::Candidate::from_document(editor.text(), "t1", "open");
    REQUIRE(open.candidate.trajectory.final_answer() == nullptr);
    batch.samples.push_back(open);
    CHECK(make_pairs(batch).size() == 1);
  }
}

TEST_CASE("make_pairs: labels agree with the oracle on sampled batches") {
  const auto batch = sample(PolicyParams{}, tasks_of(TaskKind::kAction, 40, 6), 4, 3);
  const auto labels = make_pairs(batch);
  CHECK(!labels.empty());
  for (const auto& l : labels) {
    CHECK(l.a.trajectory.task_id == l.b.trajectory.task_id);
    const auto gold = std::find_if(batch.samples.begin(), batch.samples.end(),
                                   [&](const Sample& s) { return s.candidate.id == l.a.id; })
                          ->gold;
    CHECK(reward::consistency_oracle(l.winner().trajectory, gold) > reward::consistency_oracle(l.loser().trajectory, gold));
  }
}

TEST_CASE("optimize: examples") {
  OptimConfig config;
  config.iters = 3;
  config.epochs = 2;

  SUBCASE("saturated policy does not move") {
    auto tasks = tasks_of(TaskKind::kAction, 6, 1);
    const auto more = tasks_of(TaskKind::kReasoning, 4, 2);
    tasks.insert(tasks.end(), more.begin(), more.end());
    auto prev = kGood;
    for (const auto& step : optimize(kGood, tasks, nullptr, config)) {
      CHECK(step.mean_total_reward == doctest::Approx(1.0));
      double norm = 0.0;
      for (std::size_t k = 0; k < kThetaSize; ++k) norm += std::pow(step.theta_after.theta[k] - prev.theta[k], 2);
      CHECK(std::sqrt(norm) < 1e-6);
      prev = step.theta_after;
    }
  }
  SUBCASE("lr = 0 keeps theta") {
    config.lr = 0.0;
    const auto start = PolicyParams::uniform(0.3, -0.2, 0.1);
    const auto steps = optimize(start, data::generate_tasks(10, 3, kDefaultMix), nullptr, config);
    REQUIRE(steps.size() == 3);
    for (const auto& step : steps) CHECK(step.theta_after.theta == start.theta);
    CHECK(steps.back().theta_after.version == 3);
  }
  SUBCASE("bad arguments") {
    const auto tasks = data::generate_tasks(4, 3, kDefaultMix);
    auto c = config;
    c.iters = 0;
    CHECK(code_of([&] { optimize({}, tasks, nullptr, c); }) == Errc::kInvalidArgument);
    c = config;
    c.lr = -1;
    CHECK(code_of([&] { optimize({}, tasks, nullptr, c); }) == Errc::kInvalidArgument);
    c = config;
    c.clip = 0;
    CHECK(code_of([&] { optimize({}, tasks, nullptr, c); }) == Errc::kInvalidArgument);
    CHECK(code_of([&] { optimize({}, {}, nullptr, config); }) == Errc::kEmptyTasks);
  }
}

TEST_CASE("optimize: clip safety, step invariants and reproducibility") {
  const auto tasks = data::generate_tasks(16, 11, kDefaultMix);
  for (int epochs : {1, 4}) {
    OptimConfig config;
    config.iters = 12;
    config.epochs = epochs;
    config.lr = 0.5;
    config.seed = 5;
    const auto steps = optimize(PolicyParams{}, tasks, nullptr, config);
    PolicyParams prev;
    for (const auto& step : steps) {
      // Recompute the batch and its advantages independently.
      const auto batch = sample(prev, tasks, config.k_per_task,
                                splitmix64(config.seed + static_cast<std::uint64_t>(step.iteration)));
      std::vector<double> rewards;
      for (const auto& s : batch.samples) rewards.push_back(reward::score(s.kind, s.candidate, s.gold, {}).total);
      double mean = 0.0;
      for (double r : rewards) mean += r;
      mean /= static_cast<double>(rewards.size());
      CHECK(step.mean_total_reward == doctest::Approx(mean).epsilon(1e-12));
      double max_adv = 0.0;
      for (double r : rewards) max_adv = std::max(max_adv, std::fabs(r - mean));

      const double bound = epochs * config.lr * (1.0 + config.clip) * max_adv + 1e-12;
      for (std::size_t k = 0; k < kThetaSize; ++k) {
        CHECK(std::fabs(step.theta_after.theta[k] - prev.theta[k]) <= bound);
        CHECK(std::fabs(step.theta_after.theta[k]) <= kLogitClamp);
      }
      CHECK(step.kl_estimate >= -1e-9);
      for (double r : {step.mean_total_reward, step.mean_format, step.mean_consistency, step.mean_oracle_consistency}) {
        CHECK((r >= 0.0 && r <= 1.0));
      }
      // With the oracle as the consistency scorer both means coincide.
      CHECK(step.mean_consistency == doctest::Approx(step.mean_oracle_consistency));
      prev = step.theta_after;
    }

    const auto again = optimize(PolicyParams{}, tasks, nullptr, config);
    REQUIRE(again.size() == steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) CHECK(again[i].to_json().dump() == steps[i].to_json().dump());
  }
}

TEST_CASE("optimize: step and config JSON") {
  OptimConfig config;
  config.iters = 2;
  const auto steps = optimize(PolicyParams{}, data::generate_tasks(6, 1, kDefaultMix), nullptr, config);
  CHECK(OptimStep::from_json(steps[1].to_json()).to_json() == steps[1].to_json());
  CHECK(OptimConfig::from_json(config.to_json()).to_json() == config.to_json());
  RunConfig run;
  CHECK(RunConfig::from_json(run.to_json()).to_json() == run.to_json());
  auto j = run.to_json();
  j["extra"] = 1;
  CHECK(code_of([&] { RunConfig::from_json(j); }) == Errc::kSchema);
}

TEST_CASE("evaluate: examples") {
  const auto tasks = data::generate_tasks(20, 13, kDefaultMix);
  const auto good = evaluate(kGood, tasks, 3, 1);
  for (auto kind : {TaskKind::kAction, TaskKind::kReasoning}) {
    const auto& k = good.by_kind.at(kind);
    CHECK(k.mean_format == 1.0);
    CHECK(k.mean_total == 1.0);
  }
  CHECK(*good.by_kind.at(TaskKind::kAction).mean_consistency == 1.0);
  CHECK(*good.by_kind.at(TaskKind::kReasoning).mean_rule == 1.0);
  // OTHER tasks score through the neutral preference model.
  CHECK(good.by_kind.at(TaskKind::kOther).mean_format == 1.0);
  CHECK(*good.by_kind.at(TaskKind::kOther).mean_preference == 0.5);

  const auto bad = evaluate(kBad, tasks_of(TaskKind::kAction, 10, 2), 2, 1);
  CHECK(*bad.by_kind.at(TaskKind::kAction).mean_consistency == 0.0);

  const std::vector<data::ActionTask> one = {tasks.front()};
  const auto single = evaluate(PolicyParams{}, one, 1, 9);
  const auto s = sample(PolicyParams{}, one, 1, 9).samples.front();
  CHECK(single.mean_total == reward::score(s.kind, s.candidate, s.gold, {}).total);
  CHECK(code_of([&] { evaluate(PolicyParams{}, one, 0, 9); }) == Errc::kInvalidArgument);
}

TEST_CASE("train_reward_model: separates full from empty declarations") {
  const auto model = train_reward_model(tasks_of(TaskKind::kAction, 200, 31), 4, 3, 1e-2, 500);
  CHECK(model.weights.size() == reward::kFeatureCount);
  const auto good = reward::Candidate::from_trajectory(full());
  const auto weak = reward::Candidate::from_trajectory(none());
  CHECK(reward::score_pairwise(model, good) > reward::score_pairwise(model, weak));
}
