#include "thinkact/data/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "thinkact/action/registry.hpp"
#include "thinkact/data/reference.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"
#include "thinkact/util.hpp"

namespace thinkact::data {

namespace {

using nlohmann::json;
using protocol::Args;

constexpr TaskKind kKindOrder[] = {TaskKind::kAction, TaskKind::kReasoning, TaskKind::kOther};

std::string task_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%05zu", index);
  return buf;
}

std::int64_t pick(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

std::string num(std::int64_t v) { return std::to_string(v); }

ActionTask arithmetic_chain(std::mt19937_64& rng) {
  ActionTask task;
  std::int64_t value = pick(rng, 1, 20);
  const int steps = static_cast<int>(pick(rng, 1, 3));
  std::string instruction = "Start from " + num(value);
  for (int s = 0; s < steps; ++s) {
    const std::string lhs = value < 0 ? "(" + num(value) + ")" : num(value);
    std::int64_t operand = pick(rng, 2, 9);
    char op = "+-*/"[uniform_index(rng, 4)];
    if (op == '/' && value % operand != 0) op = '*';
    switch (op) {
      case '+': value += operand; instruction += ", add " + num(operand); break;
      case '-': value -= operand; instruction += ", subtract " + num(operand); break;
      case '*': value *= operand; instruction += ", multiply by " + num(operand); break;
      default: value /= operand; instruction += ", divide by " + num(operand); break;
    }
    const std::string expr = s == 0 ? lhs + " " + op + " " + num(operand) : lhs + op + num(operand);
    task.required_actions.push_back({std::string(action::kCalcEval), Args{{"expr", expr}}});
  }
  task.instruction = instruction + ". Use the calculator for every step and report the final value.";
  task.gold_answer = num(value);
  return task;
}

ActionTask time_lookup(std::mt19937_64& rng) {
  static const char* kPhrasings[] = {
      "What time is it now in UTC? Check the clock.",
      "Look up the current UTC timestamp and report it.",
      "Report the current time as an ISO-8601 UTC timestamp.",
  };
  ActionTask task;
  task.instruction = kPhrasings[uniform_index(rng, std::size(kPhrasings))];
  task.required_actions.push_back({std::string(action::kClockNow), Args{}});
  task.gold_answer = std::string(kStubClock);
  return task;
}

ActionTask memory_round_trip(std::mt19937_64& rng) {
  static const char* kWords[] = {"amber", "basalt", "cedar", "delta", "ember", "fjord", "granite", "harbor",
                                 "indigo", "juniper", "kelp", "lumen", "meadow", "nectar", "onyx", "prism"};
  ActionTask task;
  const std::string key = "note_" + num(pick(rng, 1, 99));
  const std::string value = kWords[uniform_index(rng, std::size(kWords))];
  task.instruction = "Save the word '" + value + "' in memory under the key '" + key +
                     "', read it back, and report what was stored.";
  task.required_actions.push_back({std::string(action::kMemPut), Args{{"key", key}, {"value", value}}});
  task.required_actions.push_back({std::string(action::kMemGet), Args{{"key", key}}});
  task.gold_answer = value;
  return task;
}

ActionTask word_problem(std::mt19937_64& rng) {
  ActionTask task;
  const auto a = pick(rng, 2, 40);
  const auto b = pick(rng, 2, 12);
  const auto c = pick(rng, 1, a);
  switch (uniform_index(rng, 5)) {
    case 0:
      task.instruction = "A crate holds " + num(a) + " apples. How many apples are in " + num(b) + " crates?";
      task.gold_answer = num(a * b);
      break;
    case 1:
      task.instruction = "A train travels " + num(a) + " km each hour for " + num(b) + " hours. How many km does it cover?";
      task.gold_answer = num(a * b);
      break;
    case 2:
      task.instruction = "A shelf has " + num(a) + " books. " + num(b) + " more are added and then " + num(c) +
                         " are taken away. How many books are on the shelf?";
      task.gold_answer = num(a + b - c);
      break;
    case 3:
      task.instruction = num(a * b) + " cookies are shared equally among " + num(b) +
                         " children. How many cookies does each child get?";
      task.gold_answer = num(a);
      break;
    default:
      task.instruction = "A rope " + num(a * b) + " m long is cut into pieces of " + num(b) +
                         " m. How many pieces are there?";
      task.gold_answer = num(a);
      break;
  }
  return task;
}

ActionTask free_form(std::mt19937_64& rng) {
  static const char* kTopics[] = {"tide pools", "city gardens", "paper maps", "night trains", "old lighthouses",
                                  "winter birds", "bread baking", "river ferries", "desert plants", "quiet libraries"};
  static const char* kForms[] = {"Write a short note about ", "Describe in two sentences ", "Give a friendly tip about "};
  ActionTask task;
  task.instruction = std::string(kForms[uniform_index(rng, std::size(kForms))]) +
                     kTopics[uniform_index(rng, std::size(kTopics))] + ".";
  return task;
}

ActionTask make_task(TaskKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ActionTask task;
  switch (kind) {
    case TaskKind::kAction: {
      const auto pick_template = uniform_index(rng, 4);
      task = pick_template < 2 ? arithmetic_chain(rng) : pick_template == 2 ? time_lookup(rng) : memory_round_trip(rng);
      break;
    }
    case TaskKind::kReasoning: task = word_problem(rng); break;
    case TaskKind::kOther: task = free_form(rng); break;
  }
  task.kind = kind;
  task.seed = seed;
  return task;
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

void require_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object() || j.size() != keys.size()) throw Error(Errc::kSchema, std::string("bad field set in ") + what);
  for (const char* k : keys) {
    if (!j.contains(k)) throw Error(Errc::kSchema, std::string("missing '") + k + "' in " + what);
  }
}

}  // namespace

json ActionTask::to_json() const {
  json actions = json::array();
  for (const auto& a : required_actions) {
    actions.push_back(json{{"name", a.name}, {"args", json::parse(protocol::canonical_args(a.args))}});
  }
  return json{{"task_id", task_id},         {"instruction", instruction}, {"required_actions", actions},
              {"gold_answer", gold_answer}, {"kind", reward::to_string(kind)}, {"seed", seed}};
}

ActionTask ActionTask::from_json(const json& j) {
  try {
    require_keys(j, {"task_id", "instruction", "required_actions", "gold_answer", "kind", "seed"}, "task");
    ActionTask t;
    t.task_id = j.at("task_id").get<std::string>();
    if (!is_identifier(t.task_id)) throw Error(Errc::kSchema, "task_id is not an identifier");
    t.instruction = j.at("instruction").get<std::string>();
    t.gold_answer = j.at("gold_answer").get<std::string>();
    const auto kind = reward::task_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw Error(Errc::kSchema, "unknown kind");
    t.kind = *kind;
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<std::int64_t>() >= 0)) {
      throw Error(Errc::kSchema, "seed must be a non-negative integer");
    }
    t.seed = j.at("seed").get<std::uint64_t>();
    const auto& actions = j.at("required_actions");
    if (!actions.is_array()) throw Error(Errc::kSchema, "required_actions must be an array");
    for (const auto& a : actions) {
      require_keys(a, {"name", "args"}, "required action");
      RequiredAction ra;
      ra.name = a.at("name").get<std::string>();
      if (!is_identifier(ra.name) || !a.at("args").is_object()) throw Error(Errc::kSchema, "bad required action");
      auto args = protocol::parse_args(a.at("args").dump());
      if (!args) throw Error(Errc::kSchema, "args must be scalar");
      ra.args = std::move(*args);
      t.required_actions.push_back(std::move(ra));
    }
    return t;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, e.what());
  }
}

Mix parse_mix(std::string_view text) {
  Mix mix;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const auto part = trim(text.substr(pos, comma - pos));
    const auto eq = part.find('=');
    if (eq == std::string_view::npos) throw Error(Errc::kBadMix, "expected kind=fraction in '" + std::string(part) + "'");
    const auto kind = reward::task_kind_from_string(upper(trim(part.substr(0, eq))));
    const auto value = parse_number(trim(part.substr(eq + 1)));
    if (!kind || !value) throw Error(Errc::kBadMix, "bad mix entry '" + std::string(part) + "'");
    if (mix.count(*kind) != 0) throw Error(Errc::kBadMix, "kind listed twice in mix");
    mix[*kind] = *value;
    pos = comma + 1;
  }
  return mix;
}

std::map<TaskKind, std::size_t> apportion(std::size_t n, const Mix& mix) {
  double sum = 0.0;
  for (const auto& [kind, f] : mix) {
    if (!std::isfinite(f) || f < 0.0 || f > 1.0) throw Error(Errc::kBadMix, "fraction outside [0,1]");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw Error(Errc::kBadMix, "fractions must sum to 1");

  std::map<TaskKind, std::size_t> counts;
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const auto it = mix.find(kKindOrder[i]);
    const double quota = (it == mix.end() ? 0.0 : it->second) * static_cast<double>(n);
    const auto whole = static_cast<std::size_t>(std::floor(quota + 1e-9));
    counts[kKindOrder[i]] = whole;
    assigned += whole;
    remainders.emplace_back(quota - static_cast<double>(whole), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first + 1e-12; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[kKindOrder[remainders[r % 3].second]];
  return counts;
}

std::vector<ActionTask> generate_tasks(std::size_t n, std::uint64_t seed, const Mix& mix) {
  const auto counts = apportion(n, mix);
  std::vector<TaskKind> kinds;
  for (auto kind : kKindOrder) kinds.insert(kinds.end(), counts.at(kind), kind);
  std::mt19937_64 rng(seed);
  for (std::size_t i = kinds.size(); i > 1; --i) std::swap(kinds[i - 1], kinds[uniform_index(rng, i)]);

  std::vector<ActionTask> tasks;
  tasks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto task = make_task(kinds[i], splitmix64(seed + i));
    task.task_id = task_id_for(i);
    if (!self_consistent(task)) throw Error(Errc::kUnsatisfiable, "generated task " + task.task_id + " is inconsistent");
    tasks.push_back(std::move(task));
  }
  return tasks;
}

void write_tasks(const std::filesystem::path& path, const std::vector<ActionTask>& tasks) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  for (const auto& t : tasks) out << t.to_json().dump() << '\n';
  out.flush();
  if (!out) throw Error(Errc::kIo, "write failed: " + path.string());
}

std::vector<ActionTask> read_tasks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  std::vector<ActionTask> tasks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::kSchema, path.string() + ":" + std::to_string(line_no) + ": invalid JSON");
    tasks.push_back(ActionTask::from_json(j));
  }
  return tasks;
}

const ActionTask* find_task(const std::vector<ActionTask>& tasks, std::string_view task_id) noexcept {
  for (const auto& t : tasks) {
    if (t.task_id == task_id) return &t;
  }
  return nullptr;
}

}  // namespace thinkact::data
