#include "thinkact/train/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "thinkact/error.hpp"
#include "thinkact/reward/compose.hpp"
#include "thinkact/reward/scorers.hpp"
#include "thinkact/util.hpp"

namespace thinkact::train {

namespace {

using nlohmann::json;
using reward::TaskKind;

void require_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object() || j.size() != keys.size()) throw Error(Errc::kSchema, std::string("bad field set in ") + what);
  for (const char* k : keys) {
    if (!j.contains(k)) throw Error(Errc::kSchema, std::string("missing '") + k + "' in " + what);
  }
}

template <typename F>
auto schema_guard(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

double oracle_or_zero(const Sample& s) {
  const auto& t = s.candidate.trajectory;
  return t.final_answer() != nullptr ? reward::consistency_oracle(t, s.gold) : 0.0;
}

// One clipped step on `theta` for a batch drawn from the policy whose
// per-sample log-probabilities are `old_logp`.
void clipped_step(std::vector<double>& theta, const SampleBatch& batch, const std::vector<double>& old_logp,
                  const std::vector<double>& advantage, double lr, double clip) {
  const std::size_t n = batch.samples.size();
  std::vector<double> grad(kThetaSize, 0.0);
  std::vector<double> sum(kThetaSize);
  std::vector<int> count(kThetaSize);
  for (std::size_t j = 0; j < n; ++j) {
    const double a = advantage[j];
    if (a == 0.0) continue;
    const auto& draws = batch.samples[j].draws;
    const double ratio = std::exp(logprob_of(theta, draws) - old_logp[j]);
    // The surrogate is flat once the ratio has moved past the clip bound in
    // the direction the advantage favours.
    if ((a > 0 && ratio > 1.0 + clip) || (a < 0 && ratio < 1.0 - clip)) continue;
    const double weight = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * a;
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (const auto& d : draws) {
      sum[d.param] += (d.value ? 1.0 : 0.0) - sigmoid(theta[d.param]);
      ++count[d.param];
    }
    for (std::size_t k = 0; k < kThetaSize; ++k) {
      if (count[k] > 0) grad[k] += weight * sum[k] / count[k];
    }
  }
  for (std::size_t k = 0; k < kThetaSize; ++k) {
    theta[k] = std::clamp(theta[k] + lr * grad[k] / static_cast<double>(n), -kLogitClamp, kLogitClamp);
  }
}

}  // namespace

json OptimConfig::to_json() const {
  return json{{"iters", iters}, {"lr", lr}, {"seed", seed}, {"k_per_task", k_per_task}, {"epochs", epochs}, {"clip", clip}};
}

OptimConfig OptimConfig::from_json(const json& j) {
  return schema_guard([&] {
    require_keys(j, {"iters", "lr", "seed", "k_per_task", "epochs", "clip"}, "optimizer config");
    OptimConfig c;
    c.iters = j.at("iters").get<int>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.k_per_task = j.at("k_per_task").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.clip = j.at("clip").get<double>();
    return c;
  });
}

json RunConfig::to_json() const {
  json mix_json = json::object();
  for (const auto& [kind, f] : mix) mix_json[std::string(reward::to_string(kind))] = f;
  return json{{"n_tasks", n_tasks},   {"task_seed", task_seed},         {"mix", mix_json},
              {"optim", optim.to_json()}, {"rm_tasks", rm_tasks},       {"rm_k_per_task", rm_k_per_task},
              {"rm_l2", rm_l2},       {"rm_max_iter", rm_max_iter}};
}

RunConfig RunConfig::from_json(const json& j) {
  return schema_guard([&] {
    require_keys(j, {"n_tasks", "task_seed", "mix", "optim", "rm_tasks", "rm_k_per_task", "rm_l2", "rm_max_iter"},
                 "run config");
    RunConfig c;
    c.n_tasks = j.at("n_tasks").get<std::size_t>();
    c.task_seed = j.at("task_seed").get<std::uint64_t>();
    c.mix.clear();
    for (const auto& [name, f] : j.at("mix").items()) {
      const auto kind = reward::task_kind_from_string(name);
      if (!kind) throw Error(Errc::kSchema, "unknown task kind in mix: " + name);
      c.mix[*kind] = f.get<double>();
    }
    c.optim = OptimConfig::from_json(j.at("optim"));
    c.rm_tasks = j.at("rm_tasks").get<std::size_t>();
    c.rm_k_per_task = j.at("rm_k_per_task").get<int>();
    c.rm_l2 = j.at("rm_l2").get<double>();
    c.rm_max_iter = j.at("rm_max_iter").get<int>();
    return c;
  });
}

json OptimStep::to_json() const {
  return json{{"iteration", iteration},
              {"mean_total_reward", mean_total_reward},
              {"mean_format", mean_format},
              {"mean_consistency", mean_consistency},
              {"mean_oracle_consistency", mean_oracle_consistency},
              {"kl_estimate", kl_estimate},
              {"theta_after", theta_after.to_json()}};
}

OptimStep OptimStep::from_json(const json& j) {
  return schema_guard([&] {
    require_keys(j,
                 {"iteration", "mean_total_reward", "mean_format", "mean_consistency", "mean_oracle_consistency",
                  "kl_estimate", "theta_after"},
                 "optimizer step");
    OptimStep s;
    s.iteration = j.at("iteration").get<int>();
    s.mean_total_reward = j.at("mean_total_reward").get<double>();
    s.mean_format = j.at("mean_format").get<double>();
    s.mean_consistency = j.at("mean_consistency").get<double>();
    s.mean_oracle_consistency = j.at("mean_oracle_consistency").get<double>();
    s.kl_estimate = j.at("kl_estimate").get<double>();
    s.theta_after = PolicyParams::from_json(j.at("theta_after"));
    return s;
  });
}

std::vector<OptimStep> optimize(const PolicyParams& policy, const std::vector<data::ActionTask>& tasks,
                                const reward::PairwiseModel* reward_model, const OptimConfig& config) {
  if (config.iters < 1) throw Error(Errc::kInvalidArgument, "iters must be at least 1");
  if (!(config.lr >= 0.0) || !std::isfinite(config.lr)) throw Error(Errc::kInvalidArgument, "lr must be non-negative");
  if (config.epochs < 1) throw Error(Errc::kInvalidArgument, "epochs must be at least 1");
  if (!(config.clip > 0.0 && config.clip < 1.0)) throw Error(Errc::kInvalidArgument, "clip must be in (0,1)");
  policy.check();

  reward::Scorers scorers;
  scorers.consistency_model = reward_model;
  PolicyParams current = policy;
  std::vector<OptimStep> steps;
  steps.reserve(static_cast<std::size_t>(config.iters));
  for (int it = 0; it < config.iters; ++it) {
    const auto batch = sample(current, tasks, config.k_per_task, splitmix64(config.seed + static_cast<std::uint64_t>(it)));
    const std::size_t n = batch.samples.size();
    std::vector<double> rewards(n);
    OptimStep step;
    step.iteration = it;
    std::size_t action_samples = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& s = batch.samples[j];
      const auto b = reward::score(s.kind, s.candidate, s.gold, scorers);
      rewards[j] = b.total;
      step.mean_total_reward += b.total;
      step.mean_format += b.format;
      if (s.kind == TaskKind::kAction) {
        ++action_samples;
        step.mean_consistency += *b.consistency;
        step.mean_oracle_consistency += oracle_or_zero(s);
      }
    }
    step.mean_total_reward /= static_cast<double>(n);
    step.mean_format /= static_cast<double>(n);
    if (action_samples > 0) {
      step.mean_consistency /= static_cast<double>(action_samples);
      step.mean_oracle_consistency /= static_cast<double>(action_samples);
    }
    if (std::isnan(step.mean_total_reward)) throw Error(Errc::kDiverged, "mean reward is NaN");

    std::vector<double> advantage(n);
    for (std::size_t j = 0; j < n; ++j) advantage[j] = rewards[j] - step.mean_total_reward;
    const auto old_logp = batch.logprobs();
    for (int e = 0; e < config.epochs; ++e) clipped_step(current.theta, batch, old_logp, advantage, config.lr, config.clip);

    // k3 estimate of KL(old || new) on the batch.
    double kl = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double log_ratio = logprob_of(current.theta, batch.samples[j].draws) - old_logp[j];
      kl += std::expm1(log_ratio) - log_ratio;
    }
    step.kl_estimate = kl / static_cast<double>(n);
    ++current.version;
    step.theta_after = current;
    steps.push_back(std::move(step));
  }
  return steps;
}

json EvalSummary::to_json() const {
  json kinds = json::object();
  for (const auto& [kind, s] : by_kind) {
    json k{{"samples", s.samples}, {"mean_format", s.mean_format}, {"mean_total", s.mean_total}};
    if (s.mean_consistency) k["mean_consistency"] = *s.mean_consistency;
    if (s.mean_rule) k["mean_rule"] = *s.mean_rule;
    if (s.mean_preference) k["mean_preference"] = *s.mean_preference;
    kinds[std::string(reward::to_string(kind))] = k;
  }
  return json{{"by_kind", kinds}, {"mean_total", mean_total}};
}

EvalSummary evaluate(const PolicyParams& policy, const std::vector<data::ActionTask>& tasks, int n,
                     std::uint64_t seed, const reward::PairwiseModel* preference_model) {
  if (n < 1) throw Error(Errc::kInvalidArgument, "n must be at least 1");
  const auto batch = sample(policy, tasks, n, seed);
  reward::Scorers scorers;
  scorers.preference_model = preference_model;
  EvalSummary summary;
  for (const auto& s : batch.samples) {
    const auto b = reward::score(s.kind, s.candidate, s.gold, scorers);
    auto& k = summary.by_kind[s.kind];
    ++k.samples;
    k.mean_format += b.format;
    k.mean_total += b.total;
    if (b.consistency) k.mean_consistency = k.mean_consistency.value_or(0.0) + *b.consistency;
    if (b.rule) k.mean_rule = k.mean_rule.value_or(0.0) + *b.rule;
    if (b.preference) k.mean_preference = k.mean_preference.value_or(0.0) + *b.preference;
    summary.mean_total += b.total;
  }
  for (auto& [kind, k] : summary.by_kind) {
    const double c = static_cast<double>(k.samples);
    k.mean_format /= c;
    k.mean_total /= c;
    for (auto* m : {&k.mean_consistency, &k.mean_rule, &k.mean_preference}) {
      if (*m) **m /= c;
    }
  }
  summary.mean_total /= static_cast<double>(batch.samples.size());
  return summary;
}

reward::PairwiseModel train_reward_model(const std::vector<data::ActionTask>& tasks, int k_per_task,
                                         std::uint64_t seed, double l2, int max_iter) {
  const auto batch = sample(PolicyParams{}, tasks, k_per_task, seed);
  return reward::fit_pairwise(make_pairs(batch), l2, max_iter);
}

RunResult run_experiment(const RunConfig& config, bool use_reward_model) {
  RunResult out;
  out.tasks = data::generate_tasks(config.n_tasks, config.task_seed, config.mix);
  if (use_reward_model) {
    const auto rm_tasks = data::generate_tasks(config.rm_tasks, config.task_seed + 1, {{TaskKind::kAction, 1.0}});
    out.reward_model = train_reward_model(rm_tasks, config.rm_k_per_task, config.optim.seed + 1, config.rm_l2,
                                          config.rm_max_iter);
  }
  out.steps = optimize(PolicyParams{}, out.tasks, out.reward_model ? &*out.reward_model : nullptr, config.optim);
  return out;
}

}  // namespace thinkact::train
