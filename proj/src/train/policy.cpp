#include "thinkact/train/policy.hpp"

#include <cmath>
#include <map>
#include <random>

#include "thinkact/data/reference.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/protocol/mutate.hpp"
#include "thinkact/reward/scorers.hpp"
#include "thinkact/util.hpp"

namespace thinkact::train {

namespace {

using namespace protocol;
using nlohmann::json;
using reward::TaskKind;

constexpr std::string_view kWrongAnswer = "not sure";

std::size_t declare_index(std::string_view name) {
  for (std::size_t i = 0; i < kDeclareActions.size(); ++i) {
    if (kDeclareActions[i] == name) return i;
  }
  throw Error(Errc::kInvalidArgument, "no declare logit for action '" + std::string(name) + "'");
}

class Sampler {
 public:
  Sampler(const std::vector<double>& theta, std::uint64_t seed) : theta_(theta), rng_(seed) {}

  bool draw(std::size_t param) {
    const bool value = uniform01(rng_) < sigmoid(theta_[param]);
    draws_.push_back(Draw{static_cast<std::uint8_t>(param), value});
    return value;
  }

  std::uint64_t next_seed() { return rng_(); }
  std::vector<Draw> take() { return std::move(draws_); }

 private:
  const std::vector<double>& theta_;
  std::mt19937_64 rng_;
  std::vector<Draw> draws_;
};

Trajectory clean_trajectory(const data::ActionTask& task, const std::vector<action::BuiltinOutput>& outputs,
                            Sampler& s) {
  std::vector<Item> items;
  for (std::size_t i = 0; i < task.required_actions.size(); ++i) {
    const auto& ra = task.required_actions[i];
    const auto id = static_cast<std::int64_t>(i + 1);
    std::string thought = "Step " + std::to_string(id) + " uses " + ra.name + ".";
    if (s.draw(declare_index(ra.name))) thought += "\n" + plan_line(ra.name, ra.args, outputs[i].payload);
    items.emplace_back(ThinkBlock::from_text(neutralize(thought)));
    items.emplace_back(ActionCall{id, ra.name, Scope::kLocal, ra.args, {}});
    items.emplace_back(ActionResult{id, outputs[i].status, neutralize(outputs[i].payload), {}});
  }
  std::string answer;
  if (task.kind == TaskKind::kOther) {
    answer = data::free_form_answer(task);
  } else {
    answer = s.draw(kAnswerIndex) ? task.gold_answer : std::string(kWrongAnswer);
  }
  items.emplace_back(ThinkBlock::from_text(items.empty() ? "Working it out." : "All steps are done."));
  items.emplace_back(AnswerBlock{neutralize(answer), {}});
  return Trajectory{task.task_id, segment_turns(std::move(items)), true};
}

Sample sample_one(const std::vector<double>& theta, const data::ActionTask& task,
                  const std::vector<action::BuiltinOutput>& outputs, std::uint64_t seed, std::string id) {
  Sampler s(theta, seed);
  const auto clean = clean_trajectory(task, outputs, s);
  DocumentEditor editor(clean);
  for (std::size_t k = 0; k < std::size(kAllViolationKinds); ++k) {
    const auto kind = kAllViolationKinds[k];
    const auto site = s.next_seed();
    // Kinds the current document cannot host are not drawn at all, so the
    // recorded log-probability stays exact.
    DocumentEditor trial = editor;
    if (!trial.inject(kind, site)) continue;
    if (s.draw(kViolationBase + k)) editor = std::move(trial);
  }
  Sample out;
  out.task_id = task.task_id;
  out.kind = task.kind;
  out.gold = task.gold_answer;
  out.candidate = reward::Candidate::from_document(editor.text(), task.task_id, std::move(id));
  out.draws = s.take();
  out.logprob = logprob_of(theta, out.draws);
  return out;
}

}  // namespace

std::vector<std::string> theta_names() {
  std::vector<std::string> names;
  for (auto a : kDeclareActions) names.push_back("declare_" + std::string(a));
  names.push_back("answer");
  for (auto k : kAllViolationKinds) names.push_back("violation_" + std::string(to_string(k)));
  return names;
}

PolicyParams PolicyParams::uniform(double declare, double answer, double violation) {
  PolicyParams p;
  for (std::size_t i = 0; i < kAnswerIndex; ++i) p.theta[i] = declare;
  p.theta[kAnswerIndex] = answer;
  for (std::size_t i = kViolationBase; i < kThetaSize; ++i) p.theta[i] = violation;
  return p;
}

void PolicyParams::check() const {
  if (theta.size() != kThetaSize) throw Error(Errc::kInvalidArgument, "theta must have 13 entries");
  for (double x : theta) {
    if (!std::isfinite(x) || std::fabs(x) > kLogitClamp) throw Error(Errc::kInvalidArgument, "theta entry out of range");
  }
}

json PolicyParams::to_json() const { return json{{"version", version}, {"names", theta_names()}, {"theta", theta}}; }

PolicyParams PolicyParams::from_json(const json& j) {
  try {
    if (!j.is_object() || j.size() != 3) throw Error(Errc::kSchema, "checkpoint must have version, names, theta");
    if (j.at("names").get<std::vector<std::string>>() != theta_names()) throw Error(Errc::kSchema, "theta layout mismatch");
    PolicyParams p;
    p.version = j.at("version").get<int>();
    p.theta = j.at("theta").get<std::vector<double>>();
    p.check();
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::kSchema) throw;
    throw Error(Errc::kSchema, e.what());
  }
}

std::vector<const Trajectory*> SampleBatch::trajectories() const {
  std::vector<const Trajectory*> out;
  for (const auto& s : samples) out.push_back(&s.candidate.trajectory);
  return out;
}

std::vector<double> SampleBatch::logprobs() const {
  std::vector<double> out;
  for (const auto& s : samples) out.push_back(s.logprob);
  return out;
}

std::vector<std::string> SampleBatch::task_refs() const {
  std::vector<std::string> out;
  for (const auto& s : samples) out.push_back(s.task_id);
  return out;
}

double log_sigmoid(double x) noexcept { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logprob_of(const std::vector<double>& theta, const std::vector<Draw>& draws) noexcept {
  double lp = 0.0;
  for (const auto& d : draws) lp += log_sigmoid(d.value ? theta[d.param] : -theta[d.param]);
  return lp;
}

SampleBatch sample(const PolicyParams& policy, const std::vector<data::ActionTask>& tasks, int k_per_task,
                   std::uint64_t seed) {
  if (tasks.empty()) throw Error(Errc::kEmptyTasks, "no tasks to sample");
  if (k_per_task < 1) throw Error(Errc::kInvalidArgument, "k_per_task must be at least 1");
  policy.check();
  SampleBatch batch;
  batch.policy_version = policy.version;
  batch.samples.reserve(tasks.size() * static_cast<std::size_t>(k_per_task));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto outputs = data::execute_required(tasks[i]);
    for (int j = 0; j < k_per_task; ++j) {
      const auto stream = splitmix64(seed ^ splitmix64(i * static_cast<std::uint64_t>(k_per_task) + j + 1));
      batch.samples.push_back(
          sample_one(policy.theta, tasks[i], outputs, stream, tasks[i].task_id + "_s" + std::to_string(j)));
    }
  }
  return batch;
}

std::vector<reward::ConsistencyLabel> make_pairs(const SampleBatch& batch) {
  std::map<std::string, std::vector<std::pair<const Sample*, double>>> groups;
  std::vector<std::string> order;
  for (const auto& s : batch.samples) {
    // The oracle has no score for a trajectory without an answer.
    if (s.kind != TaskKind::kAction || s.candidate.trajectory.final_answer() == nullptr) continue;
    const double oracle = reward::consistency_oracle(s.candidate.trajectory, s.gold);
    auto& g = groups[s.task_id];
    if (g.empty()) order.push_back(s.task_id);
    g.emplace_back(&s, oracle);
  }
  std::vector<reward::ConsistencyLabel> labels;
  for (const auto& task_id : order) {
    const auto& g = groups[task_id];
    for (std::size_t a = 0; a < g.size(); ++a) {
      for (std::size_t b = a + 1; b < g.size(); ++b) {
        if (g[a].second == g[b].second) continue;
        labels.push_back(reward::ConsistencyLabel{g[a].first->candidate, g[b].first->candidate,
                                                  g[a].second > g[b].second ? reward::Preferred::kA : reward::Preferred::kB,
                                                  reward::LabelSource::kOracle});
      }
    }
  }
  return labels;
}

}  // namespace thinkact::train
