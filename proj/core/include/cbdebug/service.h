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

#ifndef CBDEBUG_SERVICE_H_
#define CBDEBUG_SERVICE_H_

#include <memory>
#include <string>

namespace cbdebug {

struct ServiceConfig {
  std::string runs_dir = "runs";
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int workers = 1;
  std::string static_dir;  // optional web UI bundle served at /

  // CBDEBUG_RUNS_DIR / CBDEBUG_PORT over the defaults.
  static ServiceConfig FromEnv();
};

// HTTP JSON API under /api with an in-process job queue: one job per run at
// a time, polling for progress.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Recovers interrupted runs, binds and serves on a background thread.
  // Returns the bound port. Throws IoError if the port is taken.
  int Start();
  // Blocks serving on the calling thread.
  void Run();
  void Stop();
  // Waits until the job queue is empty.
  void WaitIdle();

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cbdebug

#endif  // CBDEBUG_SERVICE_H_
