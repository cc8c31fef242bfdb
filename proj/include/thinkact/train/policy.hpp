#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/data/dataset.hpp"
#include "thinkact/reward/candidate.hpp"
#include "thinkact/reward/pairwise.hpp"

namespace thinkact::train {

// theta layout: one declare logit per built-in template action, the answer
// logit, then one propensity logit per violation kind (enum order).
inline constexpr std::array<std::string_view, 4> kDeclareActions = {"calc_eval", "clock_now", "mem_get", "mem_put"};
inline constexpr std::size_t kAnswerIndex = kDeclareActions.size();
inline constexpr std::size_t kViolationBase = kAnswerIndex + 1;
inline constexpr std::size_t kThetaSize = kViolationBase + 8;
inline constexpr double kLogitClamp = 50.0;

std::vector<std::string> theta_names();

struct PolicyParams {
  std::vector<double> theta = std::vector<double>(kThetaSize, 0.0);
  int version = 0;

  bool operator==(const PolicyParams&) const = default;

  // Same value everywhere: 0 is the neutral policy.
  static PolicyParams uniform(double declare, double answer, double violation);

  // Throws Error(kInvalidArgument) on wrong size, non-finite entries or
  // entries beyond the clamp.
  void check() const;

  nlohmann::json to_json() const;
  static PolicyParams from_json(const nlohmann::json& j);  // Error(kSchema)
};

// One Bernoulli choice: which logit, and the outcome.
struct Draw {
  std::uint8_t param = 0;
  bool value = false;

  bool operator==(const Draw&) const = default;
};

struct Sample {
  std::string task_id;
  reward::TaskKind kind = reward::TaskKind::kAction;
  std::string gold;
  reward::Candidate candidate;
  std::vector<Draw> draws;
  double logprob = 0.0;  // exact log-probability of the draws
};

struct SampleBatch {
  std::vector<Sample> samples;  // k consecutive samples per task, task order kept
  int policy_version = 0;

  std::vector<const protocol::Trajectory*> trajectories() const;
  std::vector<double> logprobs() const;
  std::vector<std::string> task_refs() const;
};

double log_sigmoid(double x) noexcept;
double sigmoid(double x) noexcept;

// Log-probability of `draws` under `theta`.
double logprob_of(const std::vector<double>& theta, const std::vector<Draw>& draws) noexcept;

// k stochastic trajectories per task. Deterministic in (policy, tasks, k,
// seed); each (task, sample) pair has its own splitmix-derived stream.
// Throws Error(kEmptyTasks) and Error(kInvalidArgument) for k < 1.
SampleBatch sample(const PolicyParams& policy, const std::vector<data::ActionTask>& tasks, int k_per_task,
                   std::uint64_t seed);

// Within-task pairs of ACTION samples whose oracle scores differ; the higher
// score is preferred. Samples without a final answer have no oracle score
// and are left out.
std::vector<reward::ConsistencyLabel> make_pairs(const SampleBatch& batch);

}  // namespace thinkact::train
