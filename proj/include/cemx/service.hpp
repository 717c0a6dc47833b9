/*
 * Copyright 2026 The cemx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <memory>
#include <string>

namespace cemx {

struct ServiceOptions {
  std::string export_root = "cemx_exports";  // POST .../export writes below this directory
  int worker_threads = 8;
};

struct Address {
  std::string host = "127.0.0.1";
  int port = 8787;
};

// "host:port", ":port" or "host"; InvalidParam otherwise.
Address parse_address(const std::string& text);
// CEMX_ADDR when set, else 127.0.0.1:8787.
Address default_address();

// HTTP front end over explorer sessions. Sessions live in memory; each runs
// at most one background job.
class Service {
 public:
  explicit Service(ServiceOptions opts = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread;
  // returns the bound port.
  int start(const Address& addr);
  // Binds and serves on the calling thread until stop().
  void run(const Address& addr);
  void stop();
  std::size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cemx
