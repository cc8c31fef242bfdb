#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "json.hpp"
#include "thinkact/data/dataset.hpp"
#include "thinkact/reward/pairwise.hpp"
#include "thinkact/train/policy.hpp"

namespace thinkact::train {

struct OptimConfig {
  int iters = 200;
  double lr = 0.1;
  std::uint64_t seed = 0;
  int k_per_task = 4;
  int epochs = 8;  // clipped gradient steps per sampled batch
  double clip = 0.2;

  nlohmann::json to_json() const;
  static OptimConfig from_json(const nlohmann::json& j);  // Error(kSchema)
};

// Full experiment: the task set plus the optimizer settings.
struct RunConfig {
  std::size_t n_tasks = 32;
  std::uint64_t task_seed = 0;
  data::Mix mix = {{reward::TaskKind::kAction, 0.5}, {reward::TaskKind::kReasoning, 0.3}, {reward::TaskKind::kOther, 0.2}};
  OptimConfig optim;
  // Reward model path: samples per task and labels from the neutral policy.
  std::size_t rm_tasks = 256;
  int rm_k_per_task = 4;
  double rm_l2 = 1e-2;
  int rm_max_iter = 2000;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);  // Error(kSchema)
};

struct OptimStep {
  int iteration = 0;
  double mean_total_reward = 0.0;
  double mean_format = 0.0;
  double mean_consistency = 0.0;         // as scored (model or oracle), ACTION samples
  double mean_oracle_consistency = 0.0;  // ground truth, ACTION samples
  double kl_estimate = 0.0;
  PolicyParams theta_after;

  nlohmann::json to_json() const;
  static OptimStep from_json(const nlohmann::json& j);  // Error(kSchema)
};

// Clipped policy gradient. Each iteration samples a batch, scores it with
// the per-kind composition (consistency from `reward_model`, or the oracle
// when null), and takes `epochs` steps on the batch. Every step moves a logit
// by at most lr * (1 + clip) * max|advantage|.
// Throws Error(kInvalidArgument) and Error(kDiverged).
std::vector<OptimStep> optimize(const PolicyParams& policy, const std::vector<data::ActionTask>& tasks,
                                const reward::PairwiseModel* reward_model, const OptimConfig& config);

struct KindSummary {
  std::size_t samples = 0;
  double mean_format = 0.0;
  std::optional<double> mean_consistency;
  std::optional<double> mean_rule;
  std::optional<double> mean_preference;
  double mean_total = 0.0;
};

struct EvalSummary {
  std::map<reward::TaskKind, KindSummary> by_kind;
  double mean_total = 0.0;

  nlohmann::json to_json() const;
};

// n samples per task, scored with the oracle (and the preference model for
// OTHER tasks, neutral when null). No parameter update.
EvalSummary evaluate(const PolicyParams& policy, const std::vector<data::ActionTask>& tasks, int n,
                     std::uint64_t seed, const reward::PairwiseModel* preference_model = nullptr);

// Collect from the neutral policy, pair by oracle and fit.
reward::PairwiseModel train_reward_model(const std::vector<data::ActionTask>& tasks, int k_per_task,
                                         std::uint64_t seed, double l2, int max_iter);

struct RunResult {
  std::vector<data::ActionTask> tasks;
  std::optional<reward::PairwiseModel> reward_model;
  std::vector<OptimStep> steps;
};

// The whole experiment from the neutral policy. With `use_reward_model` the
// consistency model is first fit on ACTION tasks generated from
// task_seed + 1 (a set disjoint in seed from the optimized tasks).
RunResult run_experiment(const RunConfig& config, bool use_reward_model);

}  // namespace thinkact::train
