/*
 * Copyright 2026 The cbdebug Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cbdebug/service.h"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <functional>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "cbdebug/error.h"
#include "cbdebug/run_store.h"
#include "httplib.h"
#include "serialize.h"

namespace cbdebug {

using serial::json;

ServiceConfig ServiceConfig::FromEnv() {
  ServiceConfig c;
  if (const char* dir = std::getenv("CBDEBUG_RUNS_DIR"); dir && *dir) {
    c.runs_dir = dir;
  }
  if (const char* port = std::getenv("CBDEBUG_PORT"); port && *port) {
    try {
      c.port = std::stoi(port);
    } catch (const std::exception&) {
      throw ConfigError("CBDEBUG_PORT", std::string("not a port: ") + port);
    }
  }
  return c;
}

namespace {

json ConceptsToJson(const std::vector<ConceptInfo>& concepts) {
  json out = json::array();
  for (const auto& c : concepts) {
    out.push_back({{"concept_id", c.concept_id},
                   {"name", c.name},
                   {"head_weights", c.head_weights},
                   {"active", c.active},
                   {"top_exemplars", serial::ToJson(c.explanation)}});
  }
  return out;
}

json FeedbackResponse(const FeedbackSet& fb) {
  json j = serial::ToJson(fb);
  j.erase("version");
  return j;
}

void Reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void ReplyError(httplib::Response& res, int status, const std::string& msg,
                json extra = json::object()) {
  extra["error"] = msg;
  Reply(res, status, extra);
}

json ParseBody(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);  // parse_error -> 400 upstream
  if (!j.is_object()) throw ValidationError("request body must be an object");
  return j;
}

void RejectUnknown(const json& j, std::initializer_list<const char*> keys,
                   const char* what) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : keys) ok = ok || item.key() == k;
    if (!ok) {
      throw ValidationError("unknown field '" + item.key() + "' in " + what);
    }
  }
}

}  // namespace

class Service::Impl {
 public:
  explicit Impl(ServiceConfig config)
      : config_(std::move(config)), store_(config_.runs_dir) {
    if (config_.workers < 1) throw ConfigError("workers", "must be >= 1");
    // httplib's default adds SO_REUSEPORT, which lets a second service
    // silently share the port.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR,
                 reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    Routes();
  }

  ~Impl() { Stop(); }

  int Start() {
    const int recovered = store_.RecoverInterrupted();
    (void)recovered;
    int port = config_.port;
    if (port == 0) {
      port = server_.bind_to_any_port(config_.host);
      if (port < 0) throw IoError("cannot bind " + config_.host);
    } else if (!server_.bind_to_port(config_.host, port)) {
      throw IoError("cannot bind " + config_.host + ":" +
                    std::to_string(port) + " (port in use?)");
    }
    port_ = port;
    {
      std::lock_guard<std::mutex> lock(mu_);
      stopping_ = false;
    }
    for (int i = 0; i < config_.workers; ++i) {
      workers_.emplace_back([this] { WorkerLoop(); });
    }
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void Run() {
    if (!listener_.joinable()) Start();
    listener_.join();
  }

  void Stop() {
    server_.stop();
    if (listener_.joinable()) listener_.join();
    {
      std::lock_guard<std::mutex> lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
  }

  void WaitIdle() {
    std::unique_lock<std::mutex> lock(mu_);
    idle_cv_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
  }

 private:
  struct Job {
    std::string run_id;
    std::function<void()> fn;
  };

  // Claims the run for a mutation; false if one is already in flight.
  bool Claim(const std::string& run_id) {
    std::lock_guard<std::mutex> lock(mu_);
    return in_flight_.insert(run_id).second;
  }

  void Unclaim(const std::string& run_id) {
    std::lock_guard<std::mutex> lock(mu_);
    in_flight_.erase(run_id);
  }

  bool InFlight(const std::string& run_id) {
    std::lock_guard<std::mutex> lock(mu_);
    return in_flight_.count(run_id) > 0;
  }

  void Enqueue(Job job) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      queue_.push_back(std::move(job));
    }
    cv_.notify_one();
  }

  void WorkerLoop() {
    for (;;) {
      Job job;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;  // stopping and drained
        job = std::move(queue_.front());
        queue_.pop_front();
        ++active_;
      }
      try {
        job.fn();
      } catch (const std::exception&) {
        // The run record already carries the failure.
      }
      {
        std::lock_guard<std::mutex> lock(mu_);
        in_flight_.erase(job.run_id);
        --active_;
      }
      idle_cv_.notify_all();
    }
  }

  // Wraps a handler with the error -> status mapping.
  template <class F>
  httplib::Server::Handler Guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const json::parse_error& e) {
        ReplyError(res, 400, std::string("malformed JSON: ") + e.what());
      } catch (const json::exception& e) {
        ReplyError(res, 422, e.what());
      } catch (const NotFoundError& e) {
        ReplyError(res, 404, e.what());
      } catch (const ConflictError& e) {
        ReplyError(res, 409, e.what());
      } catch (const UnknownConceptError& e) {
        ReplyError(res, 422, e.what(), {{"concept_id", e.id()}});
      } catch (const ConfigError& e) {
        ReplyError(res, 422, e.what(), {{"field", e.field()}});
      } catch (const ValidationError& e) {
        ReplyError(res, 422, e.what());
      } catch (const RetriableError& e) {
        ReplyError(res, 502, e.what());
      } catch (const std::exception& e) {
        ReplyError(res, 500, e.what());
      }
    };
  }

  void Routes() {
    server_.Get("/api/runs", Guarded([this](const auto&, auto& res) {
      json out = json::array();
      for (const auto& r : store_.List()) out.push_back(RecordJson(r));
      Reply(res, 200, out);
    }));

    server_.Post("/api/runs", Guarded([this](const auto& req, auto& res) {
      const json body = ParseBody(req);
      RejectUnknown(body, {"run_id", "preset", "seed", "dataset", "train",
                           "arch"},
                    "run request");
      const std::string preset = body.value("preset", std::string("waterbirds"));
      const uint64_t seed = body.value("seed", uint64_t{0});
      CreateRunOptions opts = DefaultRunOptions(preset, seed);
      opts.run_id = body.value("run_id", std::string());
      if (body.contains("dataset")) {
        opts.dataset = serial::DatasetConfigFromJson(body["dataset"], opts.dataset);
      }
      if (body.contains("train")) {
        opts.train = serial::TrainConfigFromJson(body["train"], opts.train);
      }
      if (body.contains("arch")) {
        opts.arch = serial::ArchitectureFromJson(body["arch"], opts.arch);
      }
      const RunRecord r = CreateRun(store_, opts);
      Claim(r.run_id);
      Enqueue({r.run_id, [this, id = r.run_id] { TrainRun(store_, id); }});
      Reply(res, 201, RecordJson(r));
    }));

    server_.Get(R"(/api/runs/([^/]+))", Guarded([this](const auto& req,
                                                       auto& res) {
      Reply(res, 200, RecordJson(store_.Get(req.matches[1])));
    }));

    server_.Get(R"(/api/runs/([^/]+)/concepts)",
                Guarded([this](const auto& req, auto& res) {
                  Reply(res, 200,
                        ConceptsToJson(ListConcepts(store_, req.matches[1])));
                }));

    server_.Post(R"(/api/runs/([^/]+)/feedback)",
                 Guarded([this](const auto& req, auto& res) {
      const std::string id = req.matches[1];
      store_.Get(id);  // 404 before body validation
      const json body = ParseBody(req);
      RejectUnknown(body, {"c_spur", "source", "threshold", "task"},
                    "feedback request");
      const FeedbackSource source = ParseFeedbackSource(
          body.value("source", std::string("human")));
      if (InFlight(id)) throw ConflictError("a job is running for run " + id);
      FeedbackSet fb;
      switch (source) {
        case FeedbackSource::kHuman: {
          if (!body.contains("c_spur")) {
            throw ValidationError("c_spur is required");
          }
          const auto ids = body["c_spur"].get<std::vector<int>>();
          fb = SubmitFeedback(store_, id, {ids.begin(), ids.end()}, source);
          break;
        }
        case FeedbackSource::kRuleOracle:
          fb = RunRuleOracle(store_, id, body.value("threshold", 0.5));
          break;
        case FeedbackSource::kLlmOracle: {
          const LlmEndpointConfig endpoint = LlmEndpointConfig::FromEnv();
          if (endpoint.base_url.empty()) {
            throw PreconditionError("CBDEBUG_LLM_URL is not set");
          }
          fb = RunLlmOracle(
              store_, id,
              TaskDescription(body.value("task", std::string("waterbirds"))),
              endpoint);
          break;
        }
      }
      Reply(res, 200, FeedbackResponse(fb));
    }));

    server_.Post(R"(/api/runs/([^/]+)/retrain)",
                 Guarded([this](const auto& req, auto& res) {
      const std::string id = req.matches[1];
      store_.Get(id);
      const json body = ParseBody(req);
      RejectUnknown(body, {"strategy", "overrides"}, "retrain request");
      if (!body.contains("strategy")) {
        throw ValidationError("strategy is required");
      }
      StrategyConfig cfg;
      if (body.contains("overrides")) {
        cfg = serial::StrategyConfigFromJson(body["overrides"], cfg);
      }
      cfg.strategy = ParseStrategy(body["strategy"].get<std::string>());
      if (!Claim(id)) {
        throw ConflictError("retrain already running for run " + id);
      }
      RunRecord r;
      try {
        r = BeginRetrain(store_, id, cfg);
      } catch (...) {
        Unclaim(id);
        throw;
      }
      Enqueue({id, [this, id] { ExecuteRetrain(store_, id); }});
      Reply(res, 202, RecordJson(r));
    }));

    server_.Get(R"(/api/runs/([^/]+)/status)",
                Guarded([this](const auto& req, auto& res) {
      const RunRecord r = store_.Get(req.matches[1]);
      Reply(res, 200,
            {{"status", RunStatusName(r.status)},
             {"progress", r.progress},
             {"message", r.message}});
    }));

    server_.Get(R"(/api/runs/([^/]+)/metrics)",
                Guarded([this](const auto& req, auto& res) {
      const std::string id = req.matches[1];
      const RunRecord r = store_.Get(id);
      if (r.metrics_ref.empty()) {
        throw NotFoundError("run " + id + " has no metrics yet");
      }
      json j = serial::ToJson(LoadMetrics(store_.Path(id, r.metrics_ref)));
      j.erase("version");
      Reply(res, 200, j);
    }));

    server_.Get(R"(/api/runs/([^/]+)/weights/histogram)",
                Guarded([this](const auto& req, auto& res) {
      int bins = 20;
      if (req.has_param("bins")) {
        const std::string v = req.get_param_value("bins");
        size_t used = 0;
        try {
          bins = std::stoi(v, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used == 0 || used != v.size()) {
          throw ConfigError("bins", "must be an integer");
        }
      }
      Reply(res, 200,
            serial::ToJson(WeightHistogram(store_, req.matches[1], bins)));
    }));

    if (!config_.static_dir.empty()) {
      server_.set_mount_point("/", config_.static_dir);
    }
  }

  static json RecordJson(const RunRecord& r) {
    json j = serial::ToJson(r);
    j.erase("version");
    return j;
  }

  ServiceConfig config_;
  RunStore store_;
  httplib::Server server_;
  std::thread listener_;
  std::vector<std::thread> workers_;
  int port_ = 0;

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<Job> queue_;
  std::set<std::string> in_flight_;
  int active_ = 0;
  bool stopping_ = false;
};

Service::Service(ServiceConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}
Service::~Service() = default;
int Service::Start() { return impl_->Start(); }
void Service::Run() { impl_->Run(); }
void Service::Stop() { impl_->Stop(); }
void Service::WaitIdle() { impl_->WaitIdle(); }

}  // namespace cbdebug
