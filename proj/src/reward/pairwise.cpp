#include "thinkact/reward/pairwise.hpp"

#include <cmath>
#include <fstream>

#include "thinkact/error.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/reward/scorers.hpp"
#include "thinkact/util.hpp"

namespace thinkact::reward {

namespace {

using nlohmann::json;

// log(1 + exp(-m)) without overflow.
double softplus_neg(double m) { return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dot(const std::vector<double>& w, const Features& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) s += w[i] * f[i];
  return s;
}

struct Objective {
  std::vector<Features> deltas;
  double l2;

  double loss(const std::vector<double>& w) const {
    double total = 0.0;
    for (const auto& d : deltas) total += softplus_neg(dot(w, d));
    for (double x : w) total += l2 * x * x;
    return total;
  }

  std::vector<double> gradient(const std::vector<double>& w) const {
    std::vector<double> g(kFeatureCount, 0.0);
    for (const auto& d : deltas) {
      const double c = -sigmoid(-dot(w, d));
      for (std::size_t i = 0; i < kFeatureCount; ++i) g[i] += c * d[i];
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) g[i] += 2.0 * l2 * w[i];
    return g;
  }
};

json candidate_json(const Candidate& c) {
  return json{{"id", c.id}, {"task_id", c.trajectory.task_id}, {"hash", c.content_hash()}, {"document", c.document}};
}

Candidate candidate_from_json(const json& j) {
  if (!j.is_object() || j.size() != 4) throw Error(Errc::kSchema, "label side must have id, task_id, hash, document");
  auto c = Candidate::from_document(j.at("document").get<std::string>(), j.at("task_id").get<std::string>(),
                                    j.at("id").get<std::string>());
  if (c.content_hash() != j.at("hash").get<std::string>()) throw Error(Errc::kSchema, "content hash mismatch");
  return c;
}

}  // namespace

Features features(const Candidate& c) {
  const auto& t = c.trajectory;
  const auto executed = executed_calls(t);
  const double fraction = declared_fraction(t);
  const double undeclared = static_cast<double>(executed.size()) * (1.0 - fraction);
  double bit = 0.0;
  if (const auto* answer = t.final_answer()) {
    const auto expected = expected_answer(t, {});
    bool any_ok = false;
    for (const auto* item : t.items()) {
      if (const auto* r = std::get_if<protocol::ActionResult>(item)) any_ok |= r->status == protocol::ResultStatus::kOk;
    }
    if (any_ok && std::string(trim(protocol::unescape(answer->text))) == expected) bit = 1.0;
  }
  return Features{fraction,
                  std::round(undeclared),
                  bit,
                  static_cast<double>(c.violations.size()),
                  static_cast<double>(t.calls().size()),
                  static_cast<double>(c.document.size()) / 1024.0};
}

json ConsistencyLabel::to_json() const {
  return json{{"a", candidate_json(a)},
              {"b", candidate_json(b)},
              {"preferred", preferred == Preferred::kA ? "A" : "B"},
              {"source", source == LabelSource::kOracle ? "ORACLE" : "HUMAN"}};
}

ConsistencyLabel ConsistencyLabel::from_json(const json& j) {
  try {
    if (!j.is_object() || j.size() != 4) throw Error(Errc::kSchema, "label must have a, b, preferred, source");
    ConsistencyLabel label{candidate_from_json(j.at("a")), candidate_from_json(j.at("b"))};
    const auto pref = j.at("preferred").get<std::string>();
    const auto source = j.at("source").get<std::string>();
    if ((pref != "A" && pref != "B") || (source != "ORACLE" && source != "HUMAN")) {
      throw Error(Errc::kSchema, "bad preferred/source");
    }
    label.preferred = pref == "A" ? Preferred::kA : Preferred::kB;
    label.source = source == "ORACLE" ? LabelSource::kOracle : LabelSource::kHuman;
    return label;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::kSchema) throw;
    throw Error(Errc::kSchema, e.what());
  }
}

PairwiseModel PairwiseModel::neutral() {
  PairwiseModel m;
  m.feature_names.assign(kFeatureNames.begin(), kFeatureNames.end());
  m.weights.assign(kFeatureCount, 0.0);
  return m;
}

json PairwiseModel::to_json() const {
  return json{{"feature_names", feature_names},
              {"weights", weights},
              {"fit_meta", {{"iterations", fit_meta.iterations}, {"final_loss", fit_meta.final_loss}}}};
}

PairwiseModel PairwiseModel::from_json(const json& j) {
  try {
    if (!j.is_object() || j.size() != 3) throw Error(Errc::kSchema, "model must have feature_names, weights, fit_meta");
    PairwiseModel m;
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.fit_meta.iterations = j.at("fit_meta").at("iterations").get<int>();
    m.fit_meta.final_loss = j.at("fit_meta").at("final_loss").get<double>();
    if (m.feature_names != std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end()) ||
        m.weights.size() != kFeatureCount) {
      throw Error(Errc::kSchema, "feature set mismatch");
    }
    for (double w : m.weights) {
      if (!std::isfinite(w)) throw Error(Errc::kSchema, "non-finite weight");
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

PairwiseModel fit_pairwise(const std::vector<ConsistencyLabel>& labels, double l2, int max_iter) {
  if (labels.size() < 2) throw Error(Errc::kInvalidArgument, "need at least 2 labels");
  if (!(l2 > 0.0)) throw Error(Errc::kInvalidArgument, "l2 must be positive");
  if (max_iter < 0) throw Error(Errc::kInvalidArgument, "max_iter must be non-negative");

  Objective obj{{}, l2};
  bool any_signal = false;
  for (const auto& label : labels) {
    const auto fw = features(label.winner());
    const auto fl = features(label.loser());
    Features d{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      d[i] = fw[i] - fl[i];
      any_signal |= d[i] != 0.0;
    }
    obj.deltas.push_back(d);
  }
  if (!any_signal) throw Error(Errc::kDegenerate, "all pairs have identical features");

  auto model = PairwiseModel::neutral();
  auto& w = model.weights;
  double loss = obj.loss(w);
  model.fit_meta.losses.push_back(loss);
  double step = 1.0 / static_cast<double>(labels.size());
  int it = 0;
  for (; it < max_iter; ++it) {
    const auto g = obj.gradient(w);
    double gnorm2 = 0.0;
    for (double x : g) gnorm2 += x * x;
    if (gnorm2 < 1e-18) break;
    // Backtrack until the Armijo condition holds, so the loss never rises.
    bool accepted = false;
    std::vector<double> trial(kFeatureCount);
    while (step > 1e-18) {
      for (std::size_t i = 0; i < kFeatureCount; ++i) trial[i] = w[i] - step * g[i];
      const double trial_loss = obj.loss(trial);
      if (trial_loss <= loss - 0.5 * step * gnorm2) {
        w = trial;
        loss = trial_loss;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    model.fit_meta.losses.push_back(loss);
    step *= 1.5;
  }
  model.fit_meta.iterations = it;
  model.fit_meta.final_loss = loss;
  return model;
}

double score_pairwise(const PairwiseModel& model, const Candidate& c) {
  if (model.weights.size() != kFeatureCount) throw Error(Errc::kInvalidArgument, "model has wrong feature count");
  return sigmoid(dot(model.weights, features(c)));
}

void write_labels(const std::filesystem::path& path, const std::vector<ConsistencyLabel>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  for (const auto& l : labels) out << l.to_json().dump() << '\n';
  if (!out) throw Error(Errc::kIo, "write failed: " + path.string());
}

std::vector<ConsistencyLabel> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  std::vector<ConsistencyLabel> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::kSchema, "invalid JSON line");
    out.push_back(ConsistencyLabel::from_json(j));
  }
  return out;
}

}  // namespace thinkact::reward
