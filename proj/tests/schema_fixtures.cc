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

// Drives the HTTP API through a full debugging session and writes every
// response body to <out_dir>/<endpoint>.json for schema validation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "cbdebug/service.h"
#include "httplib.h"
#include "json.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

int Fail(const std::string& what) {
  std::fprintf(stderr, "schema_fixtures: %s\n", what.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) return Fail("usage: schema_fixtures <out_dir>");
  const fs::path out_dir = argv[1];
  fs::remove_all(out_dir);
  fs::create_directories(out_dir);

  cbdebug::ServiceConfig cfg;
  cfg.runs_dir = (out_dir / "runs").string();
  cfg.port = 0;
  cbdebug::Service service(cfg);
  httplib::Client client("127.0.0.1", service.Start());

  int failures = 0;
  auto save = [&](const std::string& name, const httplib::Result& res,
                  int want) {
    if (!res) {
      ++failures;
      Fail(name + ": no response");
      return json();
    }
    if (res->status != want) {
      ++failures;
      Fail(name + ": status " + std::to_string(res->status) + ": " + res->body);
    }
    std::ofstream(out_dir / (name + ".json")) << res->body;
    return json::parse(res->body);
  };
  auto post = [&](const std::string& path, const json& body) {
    return client.Post(path, body.dump(), "application/json");
  };

  save("run_list_empty", client.Get("/api/runs"), 200);
  save("run_created",
       post("/api/runs", {{"run_id", "fx"},
                          {"seed", 3},
                          {"train", {{"epochs", 4}}}}),
       201);
  service.WaitIdle();
  save("run", client.Get("/api/runs/fx"), 200);
  save("status", client.Get("/api/runs/fx/status"), 200);
  save("concepts", client.Get("/api/runs/fx/concepts"), 200);
  save("metrics_before", client.Get("/api/runs/fx/metrics"), 200);
  save("error_not_found", client.Get("/api/runs/none"), 404);
  save("error_unknown_concept",
       post("/api/runs/fx/feedback", {{"c_spur", {12345}}}), 422);
  save("error_config", post("/api/runs", {{"train", {{"epochs", 0}}}}), 422);
  save("feedback_human", post("/api/runs/fx/feedback", {{"c_spur", {0}}}), 200);
  save("feedback_rule",
       post("/api/runs/fx/feedback", {{"source", "rule_oracle"}}), 200);
  save("retrain_accepted",
       post("/api/runs/fx/retrain",
            {{"strategy", "cbdebug"}, {"overrides", {{"retrain_epochs", 2}}}}),
       202);
  save("error_conflict", post("/api/runs/fx/retrain", {{"strategy", "cbdebug"}}),
       409);
  service.WaitIdle();
  save("run_retrained", client.Get("/api/runs/fx"), 200);
  save("metrics_after", client.Get("/api/runs/fx/metrics"), 200);
  save("histogram", client.Get("/api/runs/fx/weights/histogram?bins=8"), 200);
  save("run_list", client.Get("/api/runs"), 200);
  service.Stop();
  fs::remove_all(out_dir / "runs");
  return failures == 0 ? 0 : 1;
}
