#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinkact/reward/candidate.hpp"

namespace thinkact::reward {

inline constexpr std::size_t kFeatureCount = 6;
using Features = std::array<double, kFeatureCount>;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "declared_fraction", "undeclared_act_count", "answer_consistency_bit",
    "violation_count",   "action_count",         "length_normalized",
};

// answer_consistency_bit compares the answer with the last OK result and is
// 0 when there is none; length_normalized is document bytes / 1024.
Features features(const Candidate& c);

enum class Preferred { kA, kB };
enum class LabelSource { kOracle, kHuman };

struct ConsistencyLabel {
  Candidate a;
  Candidate b;
  Preferred preferred = Preferred::kA;
  LabelSource source = LabelSource::kOracle;

  const Candidate& winner() const { return preferred == Preferred::kA ? a : b; }
  const Candidate& loser() const { return preferred == Preferred::kA ? b : a; }

  // Documents are stored inline with their content hash.
  nlohmann::json to_json() const;
  // Throws Error(kSchema), including on a hash that does not match.
  static ConsistencyLabel from_json(const nlohmann::json& j);
};

struct FitMeta {
  int iterations = 0;
  double final_loss = 0.0;
  std::vector<double> losses;  // one per accepted step, starting at w = 0
};

struct PairwiseModel {
  std::vector<std::string> feature_names;
  std::vector<double> weights;
  FitMeta fit_meta;

  // All-zero weights: every trajectory scores 0.5.
  static PairwiseModel neutral();

  nlohmann::json to_json() const;
  static PairwiseModel from_json(const nlohmann::json& j);  // Error(kSchema)
};

// Gradient descent with backtracking on
//   sum log(1 + exp(-w.(f(pref) - f(other)))) + l2 * |w|^2.
// Throws Error(kInvalidArgument) for fewer than 2 labels or l2 <= 0, and
// Error(kDegenerate) when every pair has zero feature delta.
PairwiseModel fit_pairwise(const std::vector<ConsistencyLabel>& labels, double l2, int max_iter);

double score_pairwise(const PairwiseModel& model, const Candidate& c);

void write_labels(const std::filesystem::path& path, const std::vector<ConsistencyLabel>& labels);
std::vector<ConsistencyLabel> read_labels(const std::filesystem::path& path);

}  // namespace thinkact::reward
