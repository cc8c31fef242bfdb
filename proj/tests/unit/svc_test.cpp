#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <thread>

#include "doctest.h"
#include "support/svc_server.hpp"
#include "thinkact/data/reference.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/svc/journal.hpp"
#include "thinkact/svc/queue.hpp"
#include "thinkact/svc/view.hpp"

using namespace thinkact;
using namespace thinkact::svc;
using nlohmann::json;
using reward::TaskKind;
using testing::ManualClock;
using testing::scratch_dir;
using testing::ServiceHarness;

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

QueueItem pair(const std::string& id, const std::string& a = "<answer>a</answer>\n",
               const std::string& b = "<answer>b</answer>\n") {
  QueueItem item;
  item.pair_id = id;
  item.trajectory_a = a;
  item.trajectory_b = b;
  return item;
}

std::string file_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void append_raw(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::app);
  out << text;
}

DataLayout layout_with_tasks(const std::string& name, std::size_t n = 20) {
  DataLayout layout{scratch_dir(name)};
  data::write_tasks(layout.tasks(), data::generate_tasks(n, 7, kDefaultMix));
  return layout;
}

json post(httplib::Client& c, const std::string& path, const json& body, int* status) {
  auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  *status = res->status;
  return res->body.empty() ? json() : json::parse(res->body);
}

}  // namespace

TEST_CASE("journal: append, replay, torn tail, compaction") {
  const auto dir = scratch_dir("journal");
  const auto path = dir / "j.jsonl";
  {
    Journal j(path);
    CHECK(j.replay().empty());
    j.append(json{{"n", 1}});
    j.append(json{{"n", 2}});
    CHECK(j.appended() == 2);
  }
  append_raw(path, "{\"n\": 3");  // crash mid-append
  {
    Journal j(path);
    const auto records = j.replay();
    REQUIRE(records.size() == 2);
    CHECK(records[1]["n"] == 2);
    CHECK(file_text(path) == "{\"n\":1}\n{\"n\":2}\n");
    j.append(json{{"n", 4}});
  }
  {
    Journal j(path);
    const auto records = j.replay();
    REQUIRE(records.size() == 3);
    CHECK(records[2]["n"] == 4);
    j.compact({json{{"n", 9}}});
    CHECK(!std::filesystem::exists(dir / "j.jsonl.tmp"));
    j.append(json{{"n", 10}});
    CHECK(j.replay().size() == 2);
  }
  append_raw(path, "garbage\n{\"n\": 11}\n");
  CHECK(code_of([&] { Journal(path).replay(); }) == Errc::kSchema);
}

TEST_CASE("queue: label state machine") {
  const auto dir = scratch_dir("queue_sm");
  QueueStore store(dir / "q.jsonl");
  CHECK(!store.next().has_value());

  store.enqueue(pair("p1"));
  CHECK(code_of([&] { store.enqueue(pair("p1")); }) == Errc::kKeyCollision);
  CHECK(code_of([&] { store.enqueue(pair("bad id")); }) == Errc::kSchema);
  CHECK(code_of([&] { store.enqueue(pair("p9", std::string("\xff"))); }) == Errc::kSchema);

  CHECK(store.label("p1", Choice::kB, "alice") == Transition::kApplied);
  const auto item = *store.get("p1");
  CHECK(item.status == ItemStatus::kLabeled);
  CHECK(item.label == Choice::kB);
  CHECK(item.labeler == "alice");
  CHECK(item.labeled_at.has_value());
  CHECK(store.label("p1", Choice::kA, "bob") == Transition::kConflict);
  CHECK(store.get("p1")->label == Choice::kB);
  CHECK(store.label("nope", Choice::kA, "bob") == Transition::kUnknown);
  CHECK(code_of([&] { store.label("p1", Choice::kA, "has space"); }) == Errc::kSchema);

  store.enqueue(pair("p2"));
  CHECK(store.skip("p2") == Transition::kApplied);
  CHECK(store.skip("p2") == Transition::kConflict);
  CHECK(store.label("p2", Choice::kA, "bob") == Transition::kConflict);
  CHECK(!store.next().has_value());

  for (const auto& i : store.items()) CHECK(QueueItem::from_json(i.to_json()) == i);
  auto broken = item.to_json();
  broken["label"] = nullptr;
  CHECK(code_of([&] { QueueItem::from_json(broken); }) == Errc::kSchema);
}

TEST_CASE("queue: oldest first and 10-minute leases") {
  const auto dir = scratch_dir("queue_lease");
  ManualClock clock;
  QueueStore store(dir / "q.jsonl", clock.clock());
  store.enqueue(pair("first"));
  store.enqueue(pair("second"));

  const auto a = store.next();
  REQUIRE(a);
  CHECK(a->item.pair_id == "first");
  CHECK(a->lease_expires - clock.clock()() == std::chrono::minutes(10));
  CHECK(store.next()->item.pair_id == "second");
  CHECK(!store.next().has_value());

  clock.advance(std::chrono::seconds(599));
  CHECK(!store.next().has_value());
  clock.advance(std::chrono::seconds(1));
  const auto again = store.next();
  REQUIRE(again);
  CHECK(again->item.pair_id == "first");
  CHECK(again->item.status == ItemStatus::kPending);

  // A leased item can still be labeled, and labeled items never come back.
  CHECK(store.label("second", Choice::kA, "carol") == Transition::kApplied);
  clock.advance(std::chrono::minutes(30));
  CHECK(store.next()->item.pair_id == "first");
  CHECK(!store.next().has_value());
}

TEST_CASE("queue: restart keeps labels, compaction keeps state") {
  const auto dir = scratch_dir("queue_restart");
  const auto path = dir / "q.jsonl";
  {
    QueueStore store(path, action::system_clock(), 4);
    for (int i = 0; i < 10; ++i) store.enqueue(pair("p" + std::to_string(i)));
    for (int i = 0; i < 10; i += 2) store.label("p" + std::to_string(i), i % 4 ? Choice::kA : Choice::kB, "dan");
    store.skip("p9");
    store.next();  // leases are not persisted
  }
  append_raw(path, R"({"op":"label","pair_id":"p1")");
  QueueStore reopened(path);
  const auto items = reopened.items();
  REQUIRE(items.size() == 10);
  for (int i = 0; i < 10; ++i) {
    const auto& item = items[static_cast<std::size_t>(i)];
    CHECK(item.pair_id == "p" + std::to_string(i));
    if (i % 2 == 0) {
      CHECK(item.status == ItemStatus::kLabeled);
      CHECK(item.label == (i % 4 ? Choice::kA : Choice::kB));
    } else {
      CHECK(item.status == (i == 9 ? ItemStatus::kSkipped : ItemStatus::kPending));
    }
  }
  CHECK(reopened.next()->item.pair_id == "p1");
}

TEST_CASE("queue: racing labels apply once") {
  const auto dir = scratch_dir("queue_race");
  QueueStore store(dir / "q.jsonl");
  for (int round = 0; round < 100; ++round) {
    const auto id = "r" + std::to_string(round);
    store.enqueue(pair(id));
    std::atomic<int> applied{0}, conflicts{0};
    std::atomic<bool> go{false};
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&, t] {
        while (!go) std::this_thread::yield();
        const auto r = store.label(id, t % 2 ? Choice::kA : Choice::kB, "t" + std::to_string(t));
        (r == Transition::kApplied ? applied : conflicts)++;
      });
    }
    go = true;
    for (auto& t : threads) t.join();
    CHECK(applied == 1);
    CHECK(conflicts == 3);
  }
  // Exactly one label record per pair on disk.
  std::size_t label_records = 0;
  for (const auto& r : Journal(dir / "q.jsonl").replay()) label_records += r["op"] == "label";
  CHECK(label_records == 100);
}

TEST_CASE("human_labels: LABELED items only") {
  const auto dir = scratch_dir("queue_human");
  QueueStore store(dir / "q.jsonl");
  store.enqueue(pair("x"));
  store.enqueue(pair("y"));
  store.label("y", Choice::kB, "eve");
  const auto labels = human_labels(store.items());
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].source == reward::LabelSource::kHuman);
  CHECK(labels[0].winner().document == "<answer>b</answer>\n");
}

TEST_CASE("run_scripted: permissive policy reproduces the reference") {
  const action::Registry registry;
  for (const auto& task : data::generate_tasks(40, 3, kDefaultMix)) {
    const auto record = run_scripted(task, action::SecurityPolicy::permissive(registry));
    CHECK(record.document == protocol::serialize(data::render_reference(task)));
    CHECK(record.dispatch.size() == task.required_actions.size());
    CHECK(record.context.size() == task.required_actions.size());
    for (const auto& d : record.dispatch) CHECK(d.policy_verdict == action::PolicyVerdict::kAllowed);
  }
}

TEST_CASE("run_scripted: limits are enforced and context stays scoped") {
  const action::Registry registry;
  const auto tasks = data::generate_tasks(60, 5, {{TaskKind::kAction, 1.0}});
  const auto no_calc = resolve_limits(json{{"allowlist", {"clock_now", "mem_get", "mem_put"}}}, registry);
  std::size_t denied = 0;
  for (const auto& task : tasks) {
    const auto record = run_scripted(task, no_calc);
    for (const auto& d : record.dispatch) {
      if (d.call.name == "calc_eval") {
        CHECK(d.policy_verdict == action::PolicyVerdict::kDeniedAllowlist);
        CHECK(d.result.status == protocol::ResultStatus::kDenied);
        ++denied;
      }
    }
    // Prompt keys for a call never include another call's local entries.
    for (const auto& step : record.context) {
      for (const auto& key : step["prompt_keys"]) {
        if (key["scope"] == "LOCAL") CHECK(key["call_id"] == step["call_id"]);
      }
    }
  }
  CHECK(denied > 0);

  const auto one_call = resolve_limits(json{{"max_calls_per_episode", 1}, {"max_calls_per_turn", 1}}, registry);
  for (const auto& task : tasks) {
    const auto record = run_scripted(task, one_call);
    for (std::size_t i = 1; i < record.dispatch.size(); ++i) {
      CHECK(record.dispatch[i].policy_verdict == action::PolicyVerdict::kDeniedRate);
    }
  }

  CHECK(code_of([&] { resolve_limits(json{{"nope", 1}}, registry); }) == Errc::kSchema);
  CHECK(code_of([&] { resolve_limits(json{{"allowlist", {"rm_rf"}}}, registry); }) == Errc::kInvalidPolicy);
  CHECK(code_of([&] { resolve_limits(json{{"max_calls_per_turn", 0}}, registry); }) == Errc::kInvalidPolicy);
}

TEST_CASE("trajectory store: ids and restart") {
  const auto dir = scratch_dir("traj_store");
  const auto task = data::generate_tasks(1, 1, {{TaskKind::kAction, 1.0}}).front();
  std::string doc;
  {
    TrajectoryStore store(dir / "t.jsonl");
    const auto a = store.add(run_scripted(task, action::SecurityPolicy::permissive({})));
    const auto b = store.add(run_scripted(task, action::SecurityPolicy::permissive({})));
    CHECK(a.id == "tr000001");
    CHECK(b.id == "tr000002");
    doc = a.document;
  }
  TrajectoryStore reopened(dir / "t.jsonl");
  CHECK(reopened.size() == 2);
  REQUIRE(reopened.get("tr000001"));
  CHECK(reopened.get("tr000001")->document == doc);
  CHECK(reopened.get("tr000001")->dispatch.size() == task.required_actions.size());
  CHECK(!reopened.get("tr000003"));
  CHECK(reopened.add(EpisodeRecord{}).id == "tr000003");
}

TEST_CASE("document_view: typed items and violations") {
  const auto view = document_view("<think>go\nPLAN: calc_eval {\"expr\":\"1+1\"} -> 2</think>\n"
                                  "<act id=\"1\" name=\"calc_eval\" scope=\"LOCAL\">{\"expr\":\"1+1\"}</act>\n"
                                  "<result id=\"1\" status=\"OK\">2 &lt; 3</result>\n");
  CHECK(view["terminal"] == false);
  REQUIRE(view["turns"].size() == 2);
  const auto& think = view["turns"][0]["items"][0];
  CHECK(think["type"] == "think");
  CHECK(think["plans"][0]["action"] == "calc_eval");
  CHECK(view["turns"][0]["items"][1]["args"]["expr"] == "1+1");
  CHECK(view["turns"][1]["items"][0]["payload"] == "2 < 3");
  REQUIRE(view["violations"].size() == 1);
  CHECK(view["violations"][0]["kind"] == "MISSING_ANSWER");
}

TEST_CASE("http: episodes, trajectories and scoring") {
  const auto layout = layout_with_tasks("http_episodes");
  ServiceHarness h({layout});
  auto c = h.client();
  const auto tasks = data::read_tasks(layout.tasks());
  int status = 0;

  for (const auto& task : tasks) {
    const auto created = post(c, "/episodes", json{{"task_id", task.task_id}}, &status);
    REQUIRE(status == 201);
    CHECK(created["document"] == protocol::serialize(data::render_reference(task)));
    CHECK(created["view"]["terminal"] == true);
    const auto id = created["id"].get<std::string>();

    auto got = c.Get("/trajectories/" + id);
    REQUIRE(got);
    CHECK(got->status == 200);
    CHECK(json::parse(got->body)["document"] == created["document"]);

    const auto scored = post(c, "/trajectories/" + id + "/score", json::object(), &status);
    CHECK(status == 200);
    CHECK(scored["breakdown"]["format"] == 1.0);
    if (task.kind != TaskKind::kOther) CHECK(scored["breakdown"]["total"] == 1.0);
    CHECK(scored["violations"].empty());
  }

  post(c, "/episodes", json{{"task_id", "t99999"}}, &status);
  CHECK(status == 404);
  post(c, "/episodes", json{{"task", 1}}, &status);
  CHECK(status == 422);
  post(c, "/episodes", json{{"task_id", tasks[0].task_id}, {"limits", {{"max_calls_per_turn", 0}}}}, &status);
  CHECK(status == 422);
  post(c, "/episodes", json{{"task_id", tasks[0].task_id}, {"policy_ref", "ckpt1"}}, &status);
  CHECK(status == 404);
  auto raw = c.Post("/episodes", "{not json", "application/json");
  REQUIRE(raw);
  CHECK(raw->status == 422);
  CHECK(c.Get("/trajectories/tr999999")->status == 404);
  post(c, "/trajectories/tr999999/score", json::object(), &status);
  CHECK(status == 404);
  post(c, "/trajectories/tr000001/score", json{{"x", 1}}, &status);
  CHECK(status == 422);

  // Imported documents score as they are.
  const auto imported = post(c, "/trajectories", json{{"task_id", tasks[0].task_id}, {"document", "<answer>x"}}, &status);
  REQUIRE(status == 201);
  const auto scored = post(c, "/trajectories/" + imported["id"].get<std::string>() + "/score", json::object(), &status);
  CHECK(status == 200);
  CHECK(scored["breakdown"]["format"] < 1.0);
  CHECK(!scored["violations"].empty());
}

TEST_CASE("http: checkpoint episodes and run steps") {
  const auto layout = layout_with_tasks("http_ckpt");
  std::filesystem::create_directories(layout.checkpoint("good").parent_path());
  std::ofstream(layout.checkpoint("good")) << train::PolicyParams::uniform(50, 50, -50).to_json().dump();
  std::filesystem::create_directories(layout.run_steps("r1").parent_path());
  {
    std::ofstream steps(layout.run_steps("r1"));
    steps << json{{"iteration", 0}}.dump() << "\n" << json{{"iteration", 1}}.dump() << "\n{\"iter";
  }
  ServiceHarness h({layout});
  auto c = h.client();
  const auto tasks = data::read_tasks(layout.tasks());
  int status = 0;
  for (const auto& task : tasks) {
    if (task.kind != TaskKind::kAction) continue;
    const auto created = post(c, "/episodes", json{{"task_id", task.task_id}, {"policy_ref", "good"}, {"seed", 3}}, &status);
    REQUIRE(status == 201);
    CHECK(created["policy_ref"] == "good");
    const auto scored = post(c, "/trajectories/" + created["id"].get<std::string>() + "/score", json::object(), &status);
    CHECK(scored["breakdown"]["total"] == 1.0);
  }
  post(c, "/episodes", json{{"task_id", tasks[0].task_id}, {"policy_ref", "good"}, {"limits", {{"max_calls_per_turn", 1}}}},
       &status);
  CHECK(status == 422);

  auto steps = c.Get("/runs/r1/steps");
  REQUIRE(steps);
  CHECK(steps->status == 200);
  CHECK(json::parse(steps->body)["steps"].size() == 2);
  CHECK(c.Get("/runs/r2/steps")->status == 404);
}

TEST_CASE("http: labeling queue") {
  const auto layout = layout_with_tasks("http_queue");
  ServiceHarness h({layout});
  auto c = h.client();
  int status = 0;

  auto empty = c.Get("/queue/next");
  REQUIRE(empty);
  CHECK(empty->status == 204);

  const auto task = data::read_tasks(layout.tasks()).front();
  const auto doc = protocol::serialize(data::render_reference(task));
  const auto created =
      post(c, "/queue", json{{"pair_id", "p1"}, {"task_id", task.task_id}, {"trajectory_a", doc}, {"trajectory_b", "<answer>?"}},
           &status);
  CHECK(status == 201);
  CHECK(created["status"] == "PENDING");
  post(c, "/queue", json{{"pair_id", "p1"}, {"trajectory_a", "a"}, {"trajectory_b", "b"}}, &status);
  CHECK(status == 409);
  post(c, "/queue", json{{"pair_id", "next"}, {"trajectory_a", "a"}, {"trajectory_b", "b"}}, &status);
  CHECK(status == 422);
  post(c, "/queue", json{{"trajectory_a", "a"}}, &status);
  CHECK(status == 422);
  const auto auto_id = post(c, "/queue", json{{"trajectory_a", "a"}, {"trajectory_b", "b"}}, &status);
  CHECK(status == 201);
  CHECK(auto_id["pair_id"].get<std::string>().size() == 17);

  auto next = c.Get("/queue/next");
  REQUIRE(next);
  CHECK(next->status == 200);
  const auto item = json::parse(next->body);
  CHECK(item["pair_id"] == "p1");
  CHECK(item["instruction"] == task.instruction);
  CHECK(item["views"]["a"]["terminal"] == true);
  CHECK(item["views"]["b"]["violations"].size() > 0);
  CHECK(item.contains("lease_expires_at"));

  const auto labeled = post(c, "/queue/p1/label", json{{"choice", "A"}, {"labeler", "alice"}}, &status);
  CHECK(status == 200);
  CHECK(labeled["status"] == "LABELED");
  CHECK(labeled["label"] == "A");
  post(c, "/queue/p1/label", json{{"choice", "B"}, {"labeler", "bob"}}, &status);
  CHECK(status == 409);
  post(c, "/queue/zzz/label", json{{"choice", "A"}, {"labeler", "bob"}}, &status);
  CHECK(status == 404);
  const auto other = auto_id["pair_id"].get<std::string>();
  post(c, "/queue/" + other + "/label", json{{"choice", "C"}, {"labeler", "bob"}}, &status);
  CHECK(status == 422);
  post(c, "/queue/" + other + "/label", json{{"choice", "A"}}, &status);
  CHECK(status == 422);
  post(c, "/queue/" + other + "/label", json{{"choice", "A"}, {"labeler", "bob"}, {"extra", 1}}, &status);
  CHECK(status == 422);

  post(c, "/queue/" + other + "/skip", json::object(), &status);
  CHECK(status == 200);
  post(c, "/queue/" + other + "/skip", json::object(), &status);
  CHECK(status == 409);
  CHECK(c.Get("/queue/next")->status == 204);
  CHECK(c.Get("/queue/p1")->status == 200);
  CHECK(c.Get("/queue/nope")->status == 404);
}

TEST_CASE("http: racing duplicate label posts") {
  const auto layout = layout_with_tasks("http_race", 2);
  ServiceHarness h({layout});
  for (int round = 0; round < 30; ++round) {
    const auto id = "race" + std::to_string(round);
    REQUIRE(h.service().queue().enqueue(pair(id)).pair_id == id);
    std::atomic<bool> go{false};
    std::vector<int> codes(2);
    std::vector<std::thread> threads;
    for (int t = 0; t < 2; ++t) {
      threads.emplace_back([&, t] {
        auto c = h.client();
        const auto body = json{{"choice", t ? "A" : "B"}, {"labeler", "racer" + std::to_string(t)}}.dump();
        while (!go) std::this_thread::yield();
        auto res = c.Post("/queue/" + id + "/label", body, "application/json");
        codes[static_cast<std::size_t>(t)] = res ? res->status : -1;
      });
    }
    go = true;
    for (auto& t : threads) t.join();
    std::sort(codes.begin(), codes.end());
    CHECK(codes == std::vector<int>{200, 409});
    const auto item = *h.service().queue().get(id);
    CHECK(item.status == ItemStatus::kLabeled);
    CHECK(item.label == (item.labeler == "racer1" ? Choice::kA : Choice::kB));
  }
}

TEST_CASE("http: labels survive a killed server") {
  const auto layout = layout_with_tasks("http_crash", 2);
  {
    QueueStore seed(layout.queue_journal());
    for (int i = 0; i < 40; ++i) seed.enqueue(pair("c" + std::to_string(i)));
  }
  int fds[2];
  REQUIRE(::pipe(fds) == 0);
  const pid_t child = ::fork();
  REQUIRE(child >= 0);
  if (child == 0) {
    ::close(fds[0]);
    Service service({layout});
    httplib::Server server;
    service.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    if (::write(fds[1], &port, sizeof port) != sizeof port) ::_exit(3);
    server.listen_after_bind();
    ::_exit(0);
  }
  ::close(fds[1]);
  int port = 0;
  REQUIRE(::read(fds[0], &port, sizeof port) == sizeof port);
  ::close(fds[0]);

  httplib::Client c("127.0.0.1", port);
  std::vector<std::string> acknowledged;
  for (int i = 0; i < 25; ++i) {
    const auto id = "c" + std::to_string(i);
    auto res = c.Post("/queue/" + id + "/label", json{{"choice", "A"}, {"labeler", "k"}}.dump(), "application/json");
    if (res && res->status == 200) acknowledged.push_back(id);
  }
  ::kill(child, SIGKILL);
  int wstatus = 0;
  ::waitpid(child, &wstatus, 0);
  CHECK(WIFSIGNALED(wstatus));
  REQUIRE(acknowledged.size() == 25);

  Service restarted({layout});
  for (const auto& id : acknowledged) CHECK(restarted.queue().get(id)->status == ItemStatus::kLabeled);
  CHECK(restarted.queue().get("c30")->status == ItemStatus::kPending);
}
