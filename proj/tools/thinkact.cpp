// thinkact: command line front end for the pipeline.
//
// Exit codes: 0 success, 1 validation error, 2 IO error.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"
#include "thinkact/data/reference.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/reward/compose.hpp"
#include "thinkact/svc/service.hpp"
#include "thinkact/train/optimize.hpp"

using namespace thinkact;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kIoError = 2;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const std::filesystem::path& path) {
  auto j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::kSchema, path.string() + " is not JSON");
  return j;
}

void ensure_parent(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  out << text;
  if (!out.flush()) throw Error(Errc::kIo, "cannot write " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct Common {
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> tasks;

  svc::DataLayout layout() const { return svc::DataLayout::resolve(data_dir); }
  std::filesystem::path tasks_path() const { return tasks ? *tasks : layout().tasks(); }
  std::vector<data::ActionTask> load_tasks() const {
    const auto path = tasks_path();
    if (!std::filesystem::exists(path)) throw Error(Errc::kIo, "no task file at " + path.string());
    return data::read_tasks(path);
  }
  const data::ActionTask& task(const std::vector<data::ActionTask>& tasks, const std::string& id) const {
    const auto* t = data::find_task(tasks, id);
    if (t == nullptr) throw Error(Errc::kUnknownTask, "no task " + id + " in " + tasks_path().string());
    return *t;
  }
};

void add_common(CLI::App* cmd, Common& common, bool with_tasks = true) {
  cmd->add_option("--data-dir", common.data_dir, "Data directory (default $THINKACT_DATA_DIR or ./thinkact-data)");
  if (with_tasks) cmd->add_option("--tasks", common.tasks, "Task file (default <data-dir>/tasks.jsonl)");
}

train::PolicyParams resolve_policy(const Common& common, const std::string& ref) {
  if (ref == "neutral") return train::PolicyParams{};
  const std::filesystem::path as_path(ref);
  if (std::filesystem::exists(as_path)) return svc::load_checkpoint(as_path);
  return svc::load_checkpoint(common.layout().checkpoint(ref));
}

volatile std::sig_atomic_t stop_requested = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thinkact: structured thinking protocol, rewards and training pipeline"};
  app.require_subcommand(1);
  Common common;
  std::function<void()> run;

  // gen-data
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::string mix = "action=0.5,reasoning=0.3,other=0.2";
  std::optional<std::filesystem::path> out;
  auto* gen = app.add_subcommand("gen-data", "Generate a task dataset (JSONL)");
  add_common(gen, common, false);
  gen->add_option("--n", n, "Number of tasks")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--mix", mix, "Kind mix, e.g. action=0.5,reasoning=0.3,other=0.2");
  gen->add_option("--out", out, "Output file (default <data-dir>/tasks.jsonl)");
  gen->callback([&] {
    run = [&] {
      const auto tasks = data::generate_tasks(n, seed, data::parse_mix(mix));
      const auto path = out ? *out : common.layout().tasks();
      ensure_parent(path);
      data::write_tasks(path, tasks);
      std::cout << "wrote " << tasks.size() << " tasks to " << path.string() << "\n";
    };
  });

  // render-refs
  std::optional<std::filesystem::path> sft_out;
  auto* refs = app.add_subcommand("render-refs", "Render reference trajectories (and SFT pairs)");
  add_common(refs, common);
  refs->add_option("--out", out, "Reference file, one {task_id, document} per line")->required();
  refs->add_option("--sft", sft_out, "Also write SFT pairs here");
  refs->callback([&] {
    run = [&] {
      const auto tasks = common.load_tasks();
      std::string lines;
      std::vector<data::SftPair> pairs;
      for (const auto& task : tasks) {
        const auto ref = data::render_reference(task);
        lines += json{{"task_id", task.task_id}, {"document", protocol::serialize(ref)}}.dump() + "\n";
        if (sft_out) pairs.push_back(data::to_sft_pair(task, ref));
      }
      write_text(*out, lines);
      if (sft_out) {
        ensure_parent(*sft_out);
        data::write_sft_pairs(*sft_out, pairs);
      }
      std::cout << "rendered " << tasks.size() << " references\n";
    };
  });

  // run-episode
  std::string task_id;
  std::string policy_ref = std::string(svc::kScripted);
  std::optional<std::filesystem::path> limits_path;
  auto* episode = app.add_subcommand("run-episode", "Run one episode and write its document");
  add_common(episode, common);
  episode->add_option("--task", task_id, "Task id")->required();
  episode->add_option("--policy", policy_ref, "SCRIPTED, a checkpoint id or a checkpoint file");
  episode->add_option("--limits", limits_path, "JSON file of security policy overrides (SCRIPTED only)");
  episode->add_option("--seed", seed, "Sampling seed for checkpoint policies");
  episode->add_option("--out", out, "Document file (default: standard output)");
  episode->callback([&] {
    run = [&] {
      const auto tasks = common.load_tasks();
      const auto& task = common.task(tasks, task_id);
      svc::EpisodeRecord record;
      if (policy_ref == svc::kScripted) {
        const auto limits = limits_path ? read_json(*limits_path) : json::object();
        record = svc::run_scripted(task, svc::resolve_limits(limits, action::Registry{}));
      } else {
        if (limits_path) throw Error(Errc::kInvalidArgument, "--limits applies to SCRIPTED episodes only");
        record = svc::run_sampled(task, resolve_policy(common, policy_ref), seed);
      }
      if (out) {
        write_text(*out, record.document);
      } else {
        std::cout << record.document;
      }
    };
  });

  // score
  std::filesystem::path in;
  std::optional<std::filesystem::path> rm_path;
  std::optional<std::filesystem::path> pref_path;
  auto* score = app.add_subcommand("score", "Score a document; prints the reward breakdown as JSON");
  add_common(score, common);
  score->add_option("--task", task_id, "Task id")->required();
  score->add_option("--in", in, "Document file")->required();
  score->add_option("--rm", rm_path, "Consistency model (default: the oracle)");
  score->add_option("--preference", pref_path, "Preference model for OTHER tasks (default: neutral)");
  score->callback([&] {
    run = [&] {
      const auto tasks = common.load_tasks();
      const auto& task = common.task(tasks, task_id);
      const auto candidate = reward::Candidate::from_document(read_text(in), task.task_id);
      std::optional<reward::PairwiseModel> rm, pref;
      if (rm_path) rm = reward::PairwiseModel::from_json(read_json(*rm_path));
      if (pref_path) pref = reward::PairwiseModel::from_json(read_json(*pref_path));
      reward::Scorers scorers;
      if (rm) scorers.consistency_model = &*rm;
      if (pref) scorers.preference_model = &*pref;
      std::cout << reward::score(task.kind, candidate, task.gold_answer, scorers).to_json().dump() << "\n";
    };
  });

  // collect
  int k = 4;
  std::string sample_policy = "neutral";
  auto* collect = app.add_subcommand("collect", "Sample a policy and write oracle-labeled pairs");
  add_common(collect, common);
  collect->add_option("--policy", sample_policy, "neutral, a checkpoint id or a checkpoint file");
  collect->add_option("--k", k, "Samples per task")->check(CLI::PositiveNumber);
  collect->add_option("--seed", seed, "Sampling seed");
  collect->add_option("--out", out, "Label file (JSONL)")->required();
  collect->callback([&] {
    run = [&] {
      const auto tasks = common.load_tasks();
      const auto labels = train::make_pairs(train::sample(resolve_policy(common, sample_policy), tasks, k, seed));
      ensure_parent(*out);
      reward::write_labels(*out, labels);
      std::cout << "wrote " << labels.size() << " labels\n";
    };
  });

  // fit-rm
  std::optional<std::filesystem::path> labels_path;
  bool from_queue = false;
  double l2 = 1e-2;
  int max_iter = 2000;
  auto* fit = app.add_subcommand("fit-rm", "Fit a pairwise reward model");
  add_common(fit, common, false);
  fit->add_option("--labels", labels_path, "Label file from collect");
  fit->add_flag("--from-queue", from_queue, "Use LABELED items of the labeling queue (human preference)");
  fit->add_option("--l2", l2, "Ridge strength")->check(CLI::PositiveNumber);
  fit->add_option("--max-iter", max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  fit->add_option("--out", out, "Model file (default <data-dir>/models/consistency.json, or preference.json with --from-queue)");
  fit->callback([&] {
    run = [&] {
      if (labels_path.has_value() == from_queue) throw Error(Errc::kInvalidArgument, "give exactly one of --labels, --from-queue");
      std::vector<reward::ConsistencyLabel> labels;
      if (from_queue) {
        const auto journal = common.layout().queue_journal();
        if (!std::filesystem::exists(journal)) throw Error(Errc::kIo, "no queue journal at " + journal.string());
        labels = svc::human_labels(svc::QueueStore(journal).items());
      } else {
        labels = reward::read_labels(*labels_path);
      }
      const auto model = reward::fit_pairwise(labels, l2, max_iter);
      const auto path = out ? *out : (from_queue ? common.layout().preference_model() : common.layout().consistency_model());
      write_json(path, model.to_json());
      std::cout << "fit on " << labels.size() << " labels, final loss " << model.fit_meta.final_loss << ", wrote "
                << path.string() << "\n";
    };
  });

  // optimize
  std::optional<std::filesystem::path> config_path;
  std::string run_id = "run";
  std::string reward_source = "oracle";
  auto* opt = app.add_subcommand("optimize", "Optimize the simulated policy");
  add_common(opt, common, false);
  opt->add_option("--config", config_path, "Run config JSON (default: built-in defaults)");
  opt->add_option("--run-id", run_id, "Run id; steps go to <data-dir>/runs/<id>/steps.jsonl")
      ->check([](const std::string& s) { return svc::is_pair_id(s) ? std::string() : "run id must match [A-Za-z0-9_-]{1,64}"; });
  opt->add_option("--reward", reward_source, "oracle or model (fit first, as configured)")
      ->check(CLI::IsMember({"oracle", "model"}));
  opt->callback([&] {
    run = [&] {
      const auto config = config_path ? train::RunConfig::from_json(read_json(*config_path)) : train::RunConfig{};
      const auto result = train::run_experiment(config, reward_source == "model");
      const auto layout = common.layout();
      std::string lines;
      for (const auto& s : result.steps) lines += s.to_json().dump() + "\n";
      write_text(layout.run_steps(run_id), lines);
      write_json(layout.checkpoint(run_id), result.steps.back().theta_after.to_json());
      if (result.reward_model) write_json(layout.run_steps(run_id).parent_path() / "reward_model.json", result.reward_model->to_json());
      write_json(layout.run_steps(run_id).parent_path() / "config.json", config.to_json());
      double first = 0.0, last = 0.0;
      const std::size_t w = std::min<std::size_t>(10, result.steps.size());
      for (std::size_t i = 0; i < w; ++i) {
        first += result.steps[i].mean_total_reward;
        last += result.steps[result.steps.size() - 1 - i].mean_total_reward;
      }
      std::cout << json{{"run_id", run_id},
                        {"iterations", result.steps.size()},
                        {"first10_mean_total", first / static_cast<double>(w)},
                        {"last10_mean_total", last / static_cast<double>(w)},
                        {"checkpoint", layout.checkpoint(run_id).string()}}
                       .dump()
                << "\n";
    };
  });

  // evaluate
  int samples = 8;
  auto* eval = app.add_subcommand("evaluate", "Evaluate a policy; prints per-kind means as JSON");
  add_common(eval, common);
  eval->add_option("--policy", sample_policy, "neutral, a checkpoint id or a checkpoint file");
  eval->add_option("--n", samples, "Samples per task")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Sampling seed");
  eval->add_option("--preference", pref_path, "Preference model for OTHER tasks (default: neutral)");
  eval->add_option("--out", out, "Also write the summary here");
  eval->callback([&] {
    run = [&] {
      const auto tasks = common.load_tasks();
      std::optional<reward::PairwiseModel> pref;
      if (pref_path) pref = reward::PairwiseModel::from_json(read_json(*pref_path));
      const auto summary =
          train::evaluate(resolve_policy(common, sample_policy), tasks, samples, seed, pref ? &*pref : nullptr).to_json();
      if (out) write_json(*out, summary);
      std::cout << summary.dump() << "\n";
    };
  });

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  add_common(serve, common, false);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->callback([&] {
    run = [&] {
      svc::Service service({common.layout()});
      httplib::Server server;
      service.mount(server);
      const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
      if (bound < 0) throw Error(Errc::kIo, "cannot bind " + host + ":" + std::to_string(port));
      std::cout << "listening on http://" << host << ":" << bound << " data " << common.layout().root.string() << std::endl;
      std::thread watcher([&] {
        while (stop_requested == 0 && server.is_running() == false) std::this_thread::sleep_for(std::chrono::milliseconds(10));
        while (stop_requested == 0) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        server.stop();
      });
      std::signal(SIGINT, [](int) { stop_requested = 1; });
      std::signal(SIGTERM, [](int) { stop_requested = 1; });
      server.listen_after_bind();
      stop_requested = 1;
      watcher.join();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  try {
    run();
    return kOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::kIo ? kIoError : kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  }
}
