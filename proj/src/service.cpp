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

#include "cemx/service.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cemx/error.hpp"
#include "cemx/explorer.hpp"
#include "cemx/region.hpp"
#include "region_json.hpp"

namespace cemx {

using nlohmann::json;

Address parse_address(const std::string& text) {
  Address a;
  const auto colon = text.rfind(':');
  std::string host = colon == std::string::npos ? text : text.substr(0, colon);
  if (!host.empty()) a.host = host;
  if (colon != std::string::npos) {
    const std::string port = text.substr(colon + 1);
    std::size_t used = 0;
    int p = -1;
    try {
      p = std::stoi(port, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != port.size() || port.empty() || p < 0 || p > 65535)
      throw Error(ErrorCode::InvalidParam, "bad port in address '" + text + "'");
    a.port = p;
  }
  return a;
}

Address default_address() {
  const char* env = std::getenv("CEMX_ADDR");
  return env && *env ? parse_address(env) : Address{};
}

namespace {

struct Job {
  std::string id;
  mutable std::mutex mu;
  std::string state = "running";
  int step = 0;
  std::vector<double> trace;
  std::vector<double> objective;
  double initial = 0.0;
  std::string error;
  std::string error_code;

  json to_json() const {
    std::lock_guard lock(mu);
    json j = {{"id", id}, {"state", state}, {"step", step}, {"trace", trace}, {"objective", objective}};
    if (state != "running") j["initial"] = initial;
    if (!error.empty()) j["error"] = error, j["code"] = error_code;
    return j;
  }
};

struct ApiSession {
  std::string id;
  std::chrono::system_clock::time_point created;
  std::unique_ptr<Session> session;

  std::mutex mu;
  bool reserved = false;  // a job or another mutation holds the session
  int next_job = 1;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::vector<std::thread> workers;

  void join_workers() {
    std::vector<std::thread> ws;
    {
      std::lock_guard lock(mu);
      ws.swap(workers);
    }
    for (auto& w : ws) {
      if (!w.joinable()) continue;
      if (w.get_id() == std::this_thread::get_id())
        w.detach();
      else
        w.join();
    }
  }
  ~ApiSession() { join_workers(); }
};

// Marks a session as taken for the lifetime of the object, or raises Busy.
class Reservation {
 public:
  explicit Reservation(std::shared_ptr<ApiSession> s) : s_(std::move(s)) {
    std::lock_guard lock(s_->mu);
    if (s_->reserved) throw Error(ErrorCode::Busy, "session is running a job");
    s_->reserved = true;
  }
  Reservation(Reservation&& o) noexcept : s_(std::move(o.s_)) {}
  ~Reservation() {
    if (!s_) return;
    std::lock_guard lock(s_->mu);
    s_->reserved = false;
  }

 private:
  std::shared_ptr<ApiSession> s_;
};

int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Busy:
    case ErrorCode::NothingToUndo: return 409;
    case ErrorCode::SingularKernel: return 422;
    case ErrorCode::IoError: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& msg) {
  send_json(res, status, {{"error", msg}, {"code", code}});
}

std::string field(const httplib::Request& req, const std::string& key) {
  return req.has_file(key) ? req.get_file_value(key).content : std::string();
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw Error(ErrorCode::InvalidParam, "request body must be a JSON object");
  return j;
}

std::string new_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace

struct Service::Impl {
  ServiceOptions opts;
  httplib::Server server;
  mutable std::mutex mu;
  std::map<std::string, std::shared_ptr<ApiSession>> sessions;
  std::thread listener;
  std::atomic<bool> stopping{false};

  explicit Impl(ServiceOptions o) : opts(std::move(o)) {
    const int workers = std::max(1, opts.worker_threads);
    server.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
    routes();
  }

  std::shared_ptr<ApiSession> find(const std::string& id) const {
    std::lock_guard lock(mu);
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorCode::NotFound, "no session '" + id + "'");
    return it->second;
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  static Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), error_name(e.code()), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "InvalidParam", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) throw Error(ErrorCode::InvalidParam, "expected multipart/form-data");
    std::string image = field(req, "image");
    if (image.empty()) image = field(req, "lr");
    if (image.empty()) throw Error(ErrorCode::InvalidParam, "missing image field");
    Image y;
    try {
      y = decode_png(image);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidParam, std::string("image is not a readable PNG: ") + e.what());
    }

    SessionConfig cfg;
    const std::string scale = field(req, "scale");
    if (scale.empty()) throw Error(ErrorCode::InvalidParam, "missing scale field");
    try {
      std::size_t used = 0;
      cfg.factor = std::stoi(scale, &used);
      if (used != scale.size()) cfg.factor = 0;
    } catch (const std::exception&) {
      cfg.factor = 0;
    }
    if (cfg.factor < 1 || cfg.factor > 4) throw Error(ErrorCode::InvalidParam, "scale must be 1, 2, 3 or 4");
    if (const auto m = field(req, "mode"); !m.empty()) cfg.mode = parse_mode(m);
    if (const auto b = field(req, "boundary"); !b.empty()) cfg.boundary = parse_boundary(b);
    if (const auto t = field(req, "tau"); !t.empty()) cfg.tau = json::parse(t).get<double>();
    if (cfg.mode == SessionMode::Generator) {
      const std::string g = field(req, "generator");
      if (g.empty()) throw Error(ErrorCode::InvalidParam, "generator mode needs a generator field");
      cfg.generator = generator_from_json(g);
    }
    const std::string ktext = field(req, "kernel");
    const Kernel h = ktext.empty() ? bicubic_kernel(cfg.factor) : parse_kernel_json(ktext);

    auto api = std::make_shared<ApiSession>();
    api->id = new_id();
    api->created = std::chrono::system_clock::now();
    api->session = std::make_unique<Session>(std::move(y), h, cfg);
    const Session& s = *api->session;
    json out = {{"id", api->id},
                {"hr_width", s.hr_width()},
                {"hr_height", s.hr_height()},
                {"lr_width", s.y().width()},
                {"lr_height", s.y().height()},
                {"channels", s.y().channels()},
                {"scale", cfg.factor},
                {"mode", mode_name(cfg.mode)},
                {"boundary", boundary_name(cfg.boundary)}};
    {
      std::lock_guard lock(mu);
      sessions[api->id] = api;
    }
    send_json(res, 201, out);
  }

  void start_edit(const std::shared_ptr<ApiSession>& api, const httplib::Request& req, httplib::Response& res) {
    Session& s = *api->session;
    EditJobSpec spec = parse_edit_spec(req.body, s.hr_width(), s.hr_height(), s.y().channels());
    std::optional<Reservation> hold(std::in_place, api);
    // Earlier workers are finished once the reservation is free.
    api->join_workers();
    auto job = std::make_shared<Job>();
    std::lock_guard lock(api->mu);
    job->id = "j" + std::to_string(api->next_job++);
    api->jobs[job->id] = job;
    api->workers.emplace_back([this, api, job, spec = std::move(spec), hold = std::move(hold)]() mutable {
      JobReport r;
      std::string error, code;
      try {
        r = api->session->run_edit(spec, [&](int step, double value) {
          std::lock_guard lock(job->mu);
          job->step = step;
          job->trace.push_back(value);
          return !stopping.load();
        });
      } catch (const Error& e) {
        error = e.what();
        code = error_name(e.code());
      } catch (const std::exception& e) {
        error = e.what();
        code = "Internal";
      }
      // Free the session before publishing, so a client that sees "done"
      // can post the next job at once.
      hold.reset();
      std::lock_guard lock(job->mu);
      if (code.empty()) {
        job->trace = r.trace;
        job->objective = r.objective;
        job->initial = r.initial;
        job->step = r.accepted;
        job->state = "done";
      } else {
        job->state = "failed";
        job->error = error;
        job->error_code = code;
      }
    });
    send_json(res, 202, {{"job", job->id}, {"status", "/sessions/" + api->id + "/jobs/" + job->id}});
  }

  void routes() {
    auto& S = server;
    S.Post("/sessions", guarded([this](const auto& req, auto& res) { create_session(req, res); }));

    S.Get(R"(/sessions/([^/]+))", guarded([this](const auto& req, auto& res) {
            auto api = find(req.matches[1]);
            const Session& s = *api->session;
            send_json(res, 200,
                      {{"id", api->id},
                       {"hr_width", s.hr_width()},
                       {"hr_height", s.hr_height()},
                       {"mode", mode_name(s.config().mode)},
                       {"boundary", boundary_name(s.config().boundary)},
                       {"history", s.history_size()},
                       {"busy", s.busy()}});
          }));

    S.Delete(R"(/sessions/([^/]+))", guarded([this](const auto& req, auto& res) {
               auto api = find(req.matches[1]);
               {
                 Reservation hold(api);
                 api->join_workers();
               }
               std::lock_guard lock(mu);
               sessions.erase(api->id);
               send_json(res, 200, {{"deleted", api->id}});
             }));

    S.Get(R"(/sessions/([^/]+)/image\.png)", guarded([this](const auto& req, auto& res) {
            auto api = find(req.matches[1]);
            res.set_content(encode_png(api->session->x_hat()), "image/png");
          }));

    S.Post(R"(/sessions/([^/]+)/edits)", guarded([this](const auto& req, auto& res) {
             start_edit(find(req.matches[1]), req, res);
           }));

    S.Get(R"(/sessions/([^/]+)/jobs/([^/]+))", guarded([this](const auto& req, auto& res) {
            auto api = find(req.matches[1]);
            std::shared_ptr<Job> job;
            {
              std::lock_guard lock(api->mu);
              const auto it = api->jobs.find(req.matches[2]);
              if (it == api->jobs.end()) throw Error(ErrorCode::NotFound, "no job '" + std::string(req.matches[2]) + "'");
              job = it->second;
            }
            send_json(res, 200, job->to_json());
          }));

    S.Post(R"(/sessions/([^/]+)/knobs)", guarded([this](const auto& req, auto& res) {
             auto api = find(req.matches[1]);
             Session& s = *api->session;
             const json b = body_json(req);
             const RegionMask region = b.contains("region")
                                           ? detail::region_from_json(b.at("region"), s.hr_width(), s.hr_height())
                                           : full_region(s.hr_width(), s.hr_height());
             const std::string mode = b.value("mode", std::string("product"));
             if (mode != "product" && mode != "eigen") throw Error(ErrorCode::InvalidParam, "mode is product or eigen");
             Reservation hold(api);
             s.set_knobs(region, b.at("l1").get<double>(), b.at("l2").get<double>(), b.at("theta").get<double>(),
                         mode == "eigen" ? ComposeMode::Eigen : ComposeMode::Product);
             send_json(res, 200, {{"history", s.history_size()}});
           }));

    S.Post(R"(/sessions/([^/]+)/undo)", guarded([this](const auto& req, auto& res) {
             auto api = find(req.matches[1]);
             Reservation hold(api);
             api->session->undo();
             send_json(res, 200, {{"history", api->session->history_size()}});
           }));

    S.Post(R"(/sessions/([^/]+)/alternatives)", guarded([this](const auto& req, auto& res) {
             auto api = find(req.matches[1]);
             const json b = body_json(req);
             AlternativesOptions o;
             o.n = b.value("n", o.n);
             o.anchored = b.value("anchored", o.anchored);
             o.mu = b.value("mu", o.mu);
             o.steps = b.value("steps", o.steps);
             o.seed = b.value("seed", o.seed);
             Reservation hold(api);
             const auto alts = api->session->diverse_alternatives(o);
             json previews = json::array(), adopt = json::array();
             for (std::size_t i = 0; i < alts.size(); ++i) {
               const std::string base = "/sessions/" + api->id + "/alternatives/" + std::to_string(i);
               previews.push_back(base + ".png");
               adopt.push_back(base + "/adopt");
             }
             send_json(res, 200, {{"count", alts.size()}, {"previews", previews}, {"adopt", adopt}});
           }));

    S.Get(R"(/sessions/([^/]+)/alternatives/(\d+)\.png)", guarded([this](const auto& req, auto& res) {
            auto api = find(req.matches[1]);
            res.set_content(encode_png(api->session->alternative_image(std::stoul(req.matches[2]))), "image/png");
          }));

    S.Post(R"(/sessions/([^/]+)/alternatives/(\d+)/adopt)", guarded([this](const auto& req, auto& res) {
             auto api = find(req.matches[1]);
             Reservation hold(api);
             api->session->adopt_alternative(std::stoul(req.matches[2]));
             send_json(res, 200, {{"history", api->session->history_size()}});
           }));

    S.Get(R"(/sessions/([^/]+)/consistency)", guarded([this](const auto& req, auto& res) {
            auto api = find(req.matches[1]);
            const Residual r = api->session->consistency();
            send_json(res, 200, {{"linf", r.linf}, {"rms", r.rms}, {"samples", r.samples}});
          }));

    S.Post(R"(/sessions/([^/]+)/export)", guarded([this](const auto& req, auto& res) {
             auto api = find(req.matches[1]);
             const json b = body_json(req);
             const std::filesystem::path rel(b.value("dir", api->id));
             if (rel.empty() || rel.is_absolute())
               throw Error(ErrorCode::InvalidParam, "export dir must be a relative path");
             for (const auto& part : rel)
               if (part == "..") throw Error(ErrorCode::InvalidParam, "export dir may not contain '..'");
             const auto dest = std::filesystem::path(opts.export_root) / rel;
             api->session->export_to(dest.string());
             send_json(res, 200, {{"dir", dest.string()}});
           }));
  }

  int bind(const Address& a) {
    if (a.port == 0) {
      const int p = server.bind_to_any_port(a.host);
      if (p <= 0) throw Error(ErrorCode::IoError, "cannot bind " + a.host);
      return p;
    }
    if (!server.bind_to_port(a.host, a.port))
      throw Error(ErrorCode::IoError, "cannot bind " + a.host + ":" + std::to_string(a.port));
    return a.port;
  }

  void shutdown() {
    stopping = true;
    server.stop();
    if (listener.joinable()) listener.join();
    std::vector<std::shared_ptr<ApiSession>> all;
    {
      std::lock_guard lock(mu);
      for (auto& [id, s] : sessions) all.push_back(s);
    }
    for (auto& s : all) s->join_workers();
  }
};

Service::Service(ServiceOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}

Service::~Service() { impl_->shutdown(); }

int Service::start(const Address& addr) {
  const int port = impl_->bind(addr);
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::run(const Address& addr) {
  impl_->bind(addr);
  impl_->server.listen_after_bind();
}

void Service::stop() { impl_->shutdown(); }

std::size_t Service::session_count() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sessions.size();
}

}  // namespace cemx
