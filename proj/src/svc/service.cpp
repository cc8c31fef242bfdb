#include "thinkact/svc/service.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "thinkact/error.hpp"
#include "thinkact/protocol/document.hpp"
#include "thinkact/reward/compose.hpp"
#include "thinkact/svc/view.hpp"
#include "thinkact/util.hpp"

namespace thinkact::svc {

namespace {

using nlohmann::json;

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), kJson);
}

void fail(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  reply(res, status, json{{"error", code}, {"message", message}});
}

int http_status(Errc code) {
  switch (code) {
    case Errc::kUnknownTask: return 404;
    case Errc::kKeyCollision: return 409;
    case Errc::kIo: return 500;
    default: return 422;
  }
}

// Runs `fn`, turning library errors into JSON error responses.
template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    fail(res, http_status(e.code()), errc_name(e.code()), e.what());
  } catch (const json::exception& e) {
    fail(res, 422, "SCHEMA", e.what());
  }
}

json body_json(const httplib::Request& req) {
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::kSchema, "body is not JSON");
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json queue_item_json(const QueueItem& item, const data::ActionTask* task) {
  auto j = item.to_json();
  j["instruction"] = task != nullptr ? json(task->instruction) : json(nullptr);
  j["views"] = json{{"a", document_view(item.trajectory_a, item.task_id)},
                    {"b", document_view(item.trajectory_b, item.task_id)}};
  return j;
}

}  // namespace

DataLayout DataLayout::resolve(const std::optional<std::filesystem::path>& flag) {
  if (flag) return DataLayout{*flag};
  if (const char* env = std::getenv(kDataDirEnv); env != nullptr && *env != '\0') return DataLayout{env};
  return DataLayout{"thinkact-data"};
}

std::optional<reward::PairwiseModel> load_model_if_present(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::kSchema, path.string() + " is not JSON");
  return reward::PairwiseModel::from_json(j);
}

train::PolicyParams load_checkpoint(const std::filesystem::path& path) {
  auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::kSchema, path.string() + " is not JSON");
  return train::PolicyParams::from_json(j);
}

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  const auto& layout = options_.layout;
  if (std::filesystem::exists(layout.tasks())) tasks_ = data::read_tasks(layout.tasks());
  for (std::size_t i = 0; i < tasks_.size(); ++i) task_index_.emplace(tasks_[i].task_id, i);
  preference_model_ = load_model_if_present(layout.preference_model());
  queue_ = std::make_unique<QueueStore>(layout.queue_journal(), options_.clock, options_.queue_compact_every);
  trajectories_ = std::make_unique<TrajectoryStore>(layout.trajectory_journal(), options_.clock);
}

const data::ActionTask* Service::find_task(std::string_view id) const noexcept {
  const auto it = task_index_.find(id);
  return it == task_index_.end() ? nullptr : &tasks_[it->second];
}

void Service::mount(httplib::Server& server) {
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    fail(res, 500, "INTERNAL", what);
  });

  server.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, json{{"ok", true}}); });

  server.Post("/episodes", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto request = EpisodeRequest::from_json(body_json(req));
      const auto* task = find_task(request.task_id);
      if (task == nullptr) return fail(res, 404, "UNKNOWN_TASK", "no task " + request.task_id);
      EpisodeRecord record;
      if (request.policy_ref == kScripted) {
        record = run_scripted(*task, resolve_limits(request.limits, action::Registry{}));
      } else {
        if (!is_pair_id(request.policy_ref)) throw Error(Errc::kSchema, "bad checkpoint id");
        if (!request.limits.empty()) throw Error(Errc::kSchema, "limits apply to SCRIPTED episodes only");
        const auto path = options_.layout.checkpoint(request.policy_ref);
        if (!std::filesystem::exists(path)) return fail(res, 404, "UNKNOWN_CHECKPOINT", "no checkpoint " + request.policy_ref);
        record = run_sampled(*task, load_checkpoint(path), request.seed);
        record.policy_ref = request.policy_ref;
      }
      const auto stored = trajectories_->add(std::move(record));
      auto body = stored.to_json();
      body["view"] = document_view(stored.document, stored.task_id);
      reply(res, 201, body);
    });
  });

  server.Post("/trajectories", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto j = body_json(req);
      if (!j.is_object() || j.size() != 2 || !j.contains("task_id") || !j.contains("document")) {
        throw Error(Errc::kSchema, "body must be {task_id, document}");
      }
      EpisodeRecord record;
      record.task_id = j.at("task_id").get<std::string>();
      record.document = j.at("document").get<std::string>();
      record.policy_ref = "IMPORTED";
      if (find_task(record.task_id) == nullptr) return fail(res, 404, "UNKNOWN_TASK", "no task " + record.task_id);
      if (!is_valid_utf8(record.document) || record.document.size() > protocol::kMaxDocumentBytes) {
        throw Error(Errc::kSchema, "document must be UTF-8 within the size limit");
      }
      reply(res, 201, json{{"id", trajectories_->add(std::move(record)).id}});
    });
  });

  server.Get(R"(/trajectories/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto record = trajectories_->get(req.matches[1].str());
      if (!record) return fail(res, 404, "UNKNOWN_TRAJECTORY", "no trajectory " + req.matches[1].str());
      auto body = record->to_json();
      body["view"] = document_view(record->document, record->task_id);
      reply(res, 200, body);
    });
  });

  server.Post(R"(/trajectories/([A-Za-z0-9_-]+)/score)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.body.empty()) {
        const auto j = body_json(req);
        if (!j.is_object() || !j.empty()) throw Error(Errc::kSchema, "score takes an empty body or {}");
      }
      const auto record = trajectories_->get(req.matches[1].str());
      if (!record) return fail(res, 404, "UNKNOWN_TRAJECTORY", "no trajectory " + req.matches[1].str());
      const auto* task = find_task(record->task_id);
      if (task == nullptr) return fail(res, 404, "UNKNOWN_TASK", "no task " + record->task_id);
      const auto candidate = reward::Candidate::from_document(record->document, record->task_id, record->id);
      reward::Scorers scorers;
      if (preference_model_) scorers.preference_model = &*preference_model_;
      const auto breakdown = reward::score(task->kind, candidate, task->gold_answer, scorers);
      reply(res, 200,
            json{{"trajectory_id", record->id},
                 {"task_id", record->task_id},
                 {"breakdown", breakdown.to_json()},
                 {"violations", document_view(record->document, record->task_id).at("violations")}});
    });
  });

  server.Post("/queue", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto j = body_json(req);
      if (!j.is_object()) throw Error(Errc::kSchema, "body must be an object");
      for (const auto& [key, value] : j.items()) {
        if (key != "pair_id" && key != "task_id" && key != "trajectory_a" && key != "trajectory_b") {
          throw Error(Errc::kSchema, "unknown field '" + key + "'");
        }
      }
      QueueItem item;
      item.trajectory_a = j.at("trajectory_a").get<std::string>();
      item.trajectory_b = j.at("trajectory_b").get<std::string>();
      item.task_id = j.value("task_id", std::string());
      item.pair_id = j.contains("pair_id") ? j.at("pair_id").get<std::string>()
                                           : "p" + content_hash(item.trajectory_a + '\0' + item.trajectory_b);
      // "next" would be shadowed by GET /queue/next.
      if (item.pair_id == "next") throw Error(Errc::kSchema, "pair_id \"next\" is reserved");
      const auto stored = queue_->enqueue(std::move(item));
      reply(res, 201, stored.to_json());
    });
  });

  server.Get("/queue/next", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      const auto leased = queue_->next();
      if (!leased) {
        res.status = 204;
        return;
      }
      auto body = queue_item_json(leased->item, find_task(leased->item.task_id));
      body["lease_expires_at"] = action::format_iso8601(leased->lease_expires);
      reply(res, 200, body);
    });
  });

  server.Get(R"(/queue/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto item = queue_->get(req.matches[1].str());
      if (!item) return fail(res, 404, "UNKNOWN_PAIR", "no pair " + req.matches[1].str());
      reply(res, 200, queue_item_json(*item, find_task(item->task_id)));
    });
  });

  server.Post(R"(/queue/([A-Za-z0-9_-]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = req.matches[1].str();
      const auto j = body_json(req);
      if (!j.is_object() || j.size() != 2 || !j.contains("choice") || !j.contains("labeler")) {
        throw Error(Errc::kSchema, "body must be {choice, labeler}");
      }
      const auto choice = choice_from_string(j.at("choice").get<std::string>());
      if (!choice) throw Error(Errc::kSchema, "choice must be \"A\" or \"B\"");
      switch (queue_->label(id, *choice, j.at("labeler").get<std::string>())) {
        case Transition::kUnknown: return fail(res, 404, "UNKNOWN_PAIR", "no pair " + id);
        case Transition::kConflict: return fail(res, 409, "NOT_PENDING", "pair " + id + " is no longer PENDING");
        case Transition::kApplied: return reply(res, 200, queue_->get(id)->to_json());
      }
    });
  });

  server.Post(R"(/queue/([A-Za-z0-9_-]+)/skip)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = req.matches[1].str();
      switch (queue_->skip(id)) {
        case Transition::kUnknown: return fail(res, 404, "UNKNOWN_PAIR", "no pair " + id);
        case Transition::kConflict: return fail(res, 409, "NOT_PENDING", "pair " + id + " is no longer PENDING");
        case Transition::kApplied: return reply(res, 200, queue_->get(id)->to_json());
      }
    });
  });

  server.Get(R"(/runs/([A-Za-z0-9_-]+)/steps)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = req.matches[1].str();
      const auto path = options_.layout.run_steps(id);
      if (!std::filesystem::exists(path)) return fail(res, 404, "UNKNOWN_RUN", "no run " + id);
      json steps = json::array();
      std::istringstream lines(read_file(path));
      std::string line;
      while (std::getline(lines, line)) {
        if (line.empty()) continue;
        auto step = json::parse(line, nullptr, false);
        if (step.is_discarded()) break;  // torn tail of a run still being written
        steps.push_back(std::move(step));
      }
      reply(res, 200, json{{"run_id", id}, {"steps", steps}});
    });
  });
}

}  // namespace thinkact::svc
