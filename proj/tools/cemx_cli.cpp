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

// Command-line front end. Talks to the library only through the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cemx/cemx.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct Failure {
  int exit_code;
  std::string name;
  std::string message;
};

int exit_for(cemx_status st) {
  switch (st) {
    case CEMX_ERR_SINGULAR_KERNEL:
    case CEMX_ERR_ORACLE_TOO_LARGE:
    case CEMX_ERR_CALIBRATION:
    case CEMX_ERR_ESTIMATION:
    case CEMX_ERR_INTERNAL:
      return kNumeric;
    default:
      return kData;
  }
}

void check(cemx_status st) {
  if (st != CEMX_OK) throw Failure{exit_for(st), cemx_status_name(st), cemx_last_error()};
}

[[noreturn]] void fail(int code, const std::string& name, const std::string& message) {
  throw Failure{code, name, message};
}

template <class T, void (*F)(T*)>
struct Deleter {
  void operator()(T* p) const { F(p); }
};
using Img = std::unique_ptr<cemx_image, Deleter<cemx_image, cemx_image_free>>;
using Ker = std::unique_ptr<cemx_kernel, Deleter<cemx_kernel, cemx_kernel_free>>;
using Op = std::unique_ptr<cemx_operator, Deleter<cemx_operator, cemx_operator_free>>;
using Gen = std::unique_ptr<cemx_generator, Deleter<cemx_generator, cemx_generator_free>>;
using Sess = std::unique_ptr<cemx_session, Deleter<cemx_session, cemx_session_free>>;
using Srv = std::unique_ptr<cemx_server, Deleter<cemx_server, cemx_server_free>>;

std::string take(char* s) {
  std::string out = s ? s : "";
  cemx_string_free(s);
  return out;
}

Img load_img(const std::string& path) {
  cemx_image* p = nullptr;
  check(cemx_image_load(path.c_str(), &p));
  return Img(p);
}

void save_img(const cemx_image* img, const std::string& path) { check(cemx_image_save(img, path.c_str())); }

Ker load_kernel_or_bicubic(const std::string& path, int scale) {
  cemx_kernel* k = nullptr;
  if (path.empty())
    check(cemx_kernel_bicubic(scale, &k));
  else
    check(cemx_kernel_load(path.c_str(), 1, &k));
  return Ker(k);
}

Op make_op(const cemx_kernel* k, int scale, int lr_w, int lr_h, cemx_boundary b) {
  cemx_operator* op = nullptr;
  check(cemx_operator_create(k, scale, lr_w * scale, lr_h * scale, b, &op));
  return Op(op);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(kData, "IoError", "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(kData, "IoError", "cannot write " + path);
  f << text;
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".cemz";
}

// Directories expand to their image files in name order.
std::vector<std::string> expand_images(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && is_image_file(e.path())) found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  if (out.empty()) fail(kData, "IoError", "no input images");
  return out;
}

cemx_boundary boundary_from(const std::string& s) { return s == "replicate" ? CEMX_REPLICATE : CEMX_PERIODIC; }

json number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

struct Globals {
  std::uint64_t seed = 1;
  bool json = false;
};

void print_human(const json& j, const std::string& prefix = "") {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& v = it.value();
    if (v.is_object()) {
      print_human(v, prefix + it.key() + ".");
    } else if (v.is_array() && !v.empty() && v.front().is_object()) {
      for (std::size_t i = 0; i < v.size(); ++i) print_human(v[i], prefix + it.key() + "[" + std::to_string(i) + "].");
    } else if (v.is_string()) {
      std::cout << prefix << it.key() << ": " << v.get<std::string>() << "\n";
    } else if (v.is_number_float()) {
      std::ostringstream ss;
      ss.precision(10);
      ss << v.get<double>();
      std::cout << prefix << it.key() << ": " << ss.str() << "\n";
    } else {
      std::cout << prefix << it.key() << ": " << v.dump() << "\n";
    }
  }
}

void emit(const Globals& g, const json& j) {
  if (g.json)
    std::cout << j.dump(2) << "\n";
  else
    print_human(j);
}

// ---- cem ----

struct CemArgs {
  std::string lr, cand, hr, kernel, out, boundary = "periodic";
  int scale = 4;
  double tol = -1.0;
};

json residual_json(const cemx_residual& r) { return {{"linf", r.linf}, {"rms", r.rms}, {"samples", r.samples}}; }

json cmd_cem_apply(const CemArgs& a) {
  Img y = load_img(a.lr);
  Ker k = load_kernel_or_bicubic(a.kernel, a.scale);
  Op op = make_op(k.get(), a.scale, cemx_image_width(y.get()), cemx_image_height(y.get()), boundary_from(a.boundary));
  Img cand;
  if (a.cand.empty()) {
    cemx_image* up = nullptr;
    check(cemx_bicubic_upsample(y.get(), a.scale, &up));
    cand.reset(up);
  } else {
    cand = load_img(a.cand);
  }
  cemx_image* xh = nullptr;
  check(cemx_cem_apply(op.get(), cand.get(), y.get(), &xh));
  Img x(xh);
  save_img(x.get(), a.out);
  cemx_residual r{};
  check(cemx_consistency(op.get(), x.get(), y.get(), &r));
  return {{"out", a.out}, {"residual", residual_json(r)}};
}

json cmd_cem_check(const CemArgs& a) {
  Img y = load_img(a.lr);
  Img x = load_img(a.hr);
  Ker k = load_kernel_or_bicubic(a.kernel, a.scale);
  Op op = make_op(k.get(), a.scale, cemx_image_width(y.get()), cemx_image_height(y.get()), boundary_from(a.boundary));
  cemx_residual r{};
  check(cemx_consistency(op.get(), x.get(), y.get(), &r));
  json j = residual_json(r);
  if (a.tol >= 0.0) {
    j["tol"] = a.tol;
    j["consistent"] = r.linf <= a.tol;
  }
  return j;
}

// ---- kernel ----

struct KernelArgs {
  int scale = 4;
  int size = 7;
  double sigma = 1.0;
  int grid = 64;
  bool report = false;
  std::string kernel, out;
};

json write_kernel(const cemx_kernel* k, const std::string& out) {
  char* text = nullptr;
  check(cemx_kernel_to_json(k, &text));
  std::string s = take(text);
  if (out.empty()) return json::parse(s);
  check(cemx_kernel_save(k, out.c_str()));
  return {{"out", out}};
}

json cmd_kernel_bicubic(const KernelArgs& a) {
  Ker k = load_kernel_or_bicubic("", a.scale);
  return write_kernel(k.get(), a.out);
}

json cmd_kernel_gaussian(const KernelArgs& a) {
  cemx_kernel* k = nullptr;
  check(cemx_kernel_gaussian(a.size, a.sigma, &k));
  Ker owned(k);
  return write_kernel(owned.get(), a.out);
}

json cmd_kernel_invert(const KernelArgs& a) {
  Ker k = load_kernel_or_bicubic(a.kernel, a.scale);
  cemx_inverse_report r{};
  check(cemx_kernel_invert(k.get(), a.scale, a.grid, &r));
  json j{{"invertible", true}};
  if (a.report) {
    j["grid"] = {r.grid_rows, r.grid_cols};
    j["min_magnitude"] = r.min_magnitude;
    j["max_magnitude"] = r.max_magnitude;
    j["condition"] = number(r.max_magnitude / r.min_magnitude);
    j["eps"] = r.eps;
    j["floored_bins"] = r.floored_bins;
  }
  return j;
}

// ---- session / edit ----

struct SessionArgs {
  std::string lr, kernel, out, mode = "direct", boundary = "periodic", weights;
  int scale = 4;
  double tau = 0.01;
  int history = 64;
};

json cmd_session_new(const SessionArgs& a, const Globals& g) {
  Img y = load_img(a.lr);
  Ker k = load_kernel_or_bicubic(a.kernel, a.scale);
  cemx_session_config cfg;
  cemx_session_config_default(&cfg);
  cfg.factor = a.scale;
  cfg.boundary = boundary_from(a.boundary);
  cfg.mode = a.mode == "generator" ? CEMX_MODE_GENERATOR : CEMX_MODE_DIRECT;
  cfg.tau = a.tau;
  cfg.history_limit = a.history;
  Gen gen;
  if (cfg.mode == CEMX_MODE_GENERATOR) {
    cemx_generator* p = nullptr;
    if (a.weights.empty())
      check(cemx_generator_toy(a.scale, cemx_image_channels(y.get()), g.seed, 0, 16, &p));
    else
      check(cemx_generator_load(a.weights.c_str(), &p));
    gen.reset(p);
  }
  cemx_session* s = nullptr;
  check(cemx_session_create(y.get(), k.get(), &cfg, gen.get(), &s));
  Sess sess(s);
  check(cemx_session_export(sess.get(), a.out.c_str()));
  int w = 0, h = 0;
  check(cemx_session_hr_size(sess.get(), &w, &h));
  return {{"session", a.out}, {"hr_width", w}, {"hr_height", h}, {"mode", a.mode}};
}

struct EditArgs {
  std::string session, spec, out, xhat;
  int n = 4;
  int steps = 40;
  bool anchored = false;
};

Sess open_session(const std::string& dir) {
  cemx_session* s = nullptr;
  check(cemx_session_load(dir.c_str(), &s));
  return Sess(s);
}

json cmd_edit_run(const EditArgs& a) {
  Sess s = open_session(a.session);
  std::string spec = read_file(a.spec);
  char* rep = nullptr;
  check(cemx_session_run_edit(s.get(), spec.c_str(), nullptr, nullptr, &rep));
  json r = json::parse(take(rep));
  const std::string dest = a.out.empty() ? a.session : a.out;
  check(cemx_session_export(s.get(), dest.c_str()));
  if (!a.xhat.empty()) {
    cemx_image* x = nullptr;
    check(cemx_session_x_hat(s.get(), &x));
    Img owned(x);
    save_img(owned.get(), a.xhat);
  }
  cemx_residual res{};
  check(cemx_session_consistency(s.get(), &res));
  json j{{"tool", r.at("tool")},
         {"accepted", r.at("accepted")},
         {"rejected", r.at("rejected")},
         {"stalled", r.at("stalled")},
         {"initial_objective", r.at("initial_objective")},
         {"final_objective", r.at("objective").empty() ? r.at("initial_objective") : r.at("objective").back()},
         {"residual", residual_json(res)},
         {"session", dest}};
  return j;
}

json cmd_edit_alternatives(const EditArgs& a, const Globals& g) {
  Sess s = open_session(a.session);
  check(cemx_session_alternatives(s.get(), a.n, a.anchored ? 1 : 0, a.steps, g.seed));
  fs::create_directories(a.out);
  json files = json::array();
  for (int i = 0; i < a.n; ++i) {
    cemx_image* x = nullptr;
    check(cemx_session_alternative(s.get(), std::size_t(i), &x));
    Img owned(x);
    std::string path = (fs::path(a.out) / ("alt_" + std::to_string(i) + ".png")).string();
    save_img(owned.get(), path);
    files.push_back(path);
  }
  return {{"count", a.n}, {"files", files}};
}

// ---- metrics ----

struct MetricArgs {
  std::string ref, kernel, boundary = "periodic";
  std::vector<std::string> outputs;
  int scale = 4;
};

json cmd_metric_pair(const MetricArgs& a, bool psnr) {
  Img ref = load_img(a.ref);
  json per = json::array();
  double total = 0.0;
  auto files = expand_images(a.outputs);
  for (const auto& f : files) {
    Img x = load_img(f);
    double v = 0.0;
    check(psnr ? cemx_psnr(ref.get(), x.get(), &v) : cemx_rmse(ref.get(), x.get(), &v));
    per.push_back({{"file", f}, {"value", number(v)}});
    total += v;
  }
  return {{"metric", psnr ? "psnr" : "rmse"}, {"mean", number(total / double(files.size()))}, {"outputs", per}};
}

json cmd_metric_diversity(const MetricArgs& a) {
  auto files = expand_images(a.outputs);
  std::vector<Img> imgs;
  for (const auto& f : files) imgs.push_back(load_img(f));
  Img ref;
  if (!a.ref.empty()) ref = load_img(a.ref);
  Ker k = load_kernel_or_bicubic(a.kernel, a.scale);
  const int w = cemx_image_width(imgs.front().get()), h = cemx_image_height(imgs.front().get());
  if (w % a.scale || h % a.scale) fail(kData, "InvalidDims", "output size is not a multiple of the scale");
  Op op = make_op(k.get(), a.scale, w / a.scale, h / a.scale, boundary_from(a.boundary));
  std::vector<const cemx_image*> raw;
  for (const auto& i : imgs) raw.push_back(i.get());
  cemx_diversity_report r{};
  check(cemx_diversity(op.get(), raw.data(), raw.size(), ref.get(), &r));
  json j{{"metric", "diversity"}, {"count", files.size()}, {"sigma", r.sigma}};
  if (ref) {
    j["rmse_mean"] = r.rmse_mean;
    j["rmse_std"] = r.rmse_std;
  }
  return j;
}

// ---- calibrate / train / gradcheck ----

struct TrainArgs {
  std::vector<std::string> images;
  std::string out, kernel, calibration;
  int steps = 20;
  int scale = 2;
  int crop = 16;
  int batch = 4;
  int features = 8;
};

std::vector<Img> load_all(const std::vector<std::string>& paths) {
  std::vector<Img> out;
  for (const auto& f : expand_images(paths)) out.push_back(load_img(f));
  return out;
}

json cmd_calibrate(const TrainArgs& a) {
  auto imgs = load_all(a.images);
  std::vector<const cemx_image*> raw;
  for (const auto& i : imgs) raw.push_back(i.get());
  char* text = nullptr;
  check(cemx_calibrate(raw.data(), raw.size(), &text));
  std::string s = take(text);
  json cal = json::parse(s);
  if (a.out.empty()) return cal;
  write_file(a.out, s);
  return {{"out", a.out}, {"images", imgs.size()}};
}

json cmd_train_toy(const TrainArgs& a, const Globals& g) {
  auto imgs = load_all(a.images);
  std::vector<const cemx_image*> raw;
  for (const auto& i : imgs) raw.push_back(i.get());
  Ker k = load_kernel_or_bicubic(a.kernel, a.scale);
  json opts{{"factor", a.scale}, {"crop", a.crop},         {"batch", a.batch},
            {"steps", a.steps},  {"features", a.features}, {"seed", g.seed}};
  if (!a.calibration.empty()) opts["calibration"] = json::parse(read_file(a.calibration));
  cemx_generator* p = nullptr;
  char* rep = nullptr;
  check(cemx_train_toy(raw.data(), raw.size(), k.get(), opts.dump().c_str(), &p, &rep));
  Gen gen(p);
  json r = json::parse(take(rep));
  check(cemx_generator_save(gen.get(), a.out.c_str()));
  int updates = 0;
  for (const auto& s : r.at("steps")) updates += s.at("generator_step").get<bool>() ? 1 : 0;
  json j{{"out", a.out}, {"steps", r.at("steps").size()}, {"generator_updates", updates},
         {"critic_batches", r.at("critic_batches")}};
  if (!r.at("steps").empty()) j["final_total"] = r.at("steps").back().at("total");
  if (g.json) j["trace"] = r.at("steps");
  return j;
}

json cmd_gradcheck(double tol, const Globals& g, bool& passed) {
  char* rep = nullptr;
  int ok = 0;
  check(cemx_gradcheck_all(g.seed, tol, &rep, &ok));
  json r = json::parse(take(rep));
  passed = ok != 0;
  if (g.json) return r;
  for (const auto& e : r.at("entries"))
    std::cout << (e.at("passed").get<bool>() ? "PASS " : "FAIL ") << e.at("name").get<std::string>()
              << "  max_rel_error=" << e.at("max_rel_error").get<double>() << "\n";
  return {{"entries", r.at("entries").size()}, {"passed", passed}};
}

// ---- serve ----

int cmd_serve(const std::string& addr, const std::string& export_root) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // before the server spawns threads

  cemx_server* p = nullptr;
  check(cemx_server_create(export_root.c_str(), &p));
  Srv srv(p);
  int port = 0;
  check(cemx_server_start(srv.get(), addr.empty() ? nullptr : addr.c_str(), &port));
  std::cout << "listening on port " << port << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  cemx_server_stop(srv.get());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cemx: consistency-enforcing super-resolution explorer"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_config("--config", "", "key=value configuration file; command-line flags take precedence");
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice")->capture_default_str();
  app.add_flag("--json", g.json, "machine-readable output");

  std::function<json()> action;
  int exit_code = kOk;

  // cem
  CemArgs cem;
  auto* cem_cmd = app.add_subcommand("cem", "consistency projection")->require_subcommand(1);
  auto* apply = cem_cmd->add_subcommand("apply", "project a candidate onto the consistent set");
  apply->add_option("--lr", cem.lr, "low-resolution image")->required();
  apply->add_option("--cand", cem.cand, "candidate HR image (default: bicubic upsample)");
  apply->add_option("--kernel", cem.kernel, "kernel JSON (default: bicubic)");
  apply->add_option("--scale", cem.scale, "scale factor")->required()->check(CLI::PositiveNumber);
  apply->add_option("--boundary", cem.boundary)->check(CLI::IsMember({"periodic", "replicate"}))->capture_default_str();
  apply->add_option("--out", cem.out, "output image (.png, .pgm or lossless .cemz)")->required();
  apply->callback([&] { action = [&] { return cmd_cem_apply(cem); }; });
  auto* chk = cem_cmd->add_subcommand("check", "report the consistency residual of an HR image");
  chk->add_option("--lr", cem.lr)->required();
  chk->add_option("--hr", cem.hr)->required();
  chk->add_option("--kernel", cem.kernel);
  chk->add_option("--scale", cem.scale)->required()->check(CLI::PositiveNumber);
  chk->add_option("--boundary", cem.boundary)->check(CLI::IsMember({"periodic", "replicate"}))->capture_default_str();
  chk->add_option("--tol", cem.tol, "exit 4 when linf exceeds this");
  chk->callback([&] {
    action = [&] {
      json j = cmd_cem_check(cem);
      if (j.contains("consistent") && !j.at("consistent").get<bool>()) exit_code = kNumeric;
      return j;
    };
  });

  // kernel
  KernelArgs ker;
  auto* ker_cmd = app.add_subcommand("kernel", "blur kernels")->require_subcommand(1);
  auto* kb = ker_cmd->add_subcommand("bicubic", "bicubic antialiasing kernel");
  kb->add_option("--scale", ker.scale)->required()->check(CLI::PositiveNumber);
  kb->add_option("--out", ker.out, "output JSON (default: stdout)");
  kb->callback([&] { action = [&] { return cmd_kernel_bicubic(ker); }; });
  auto* kg = ker_cmd->add_subcommand("gaussian", "normalized Gaussian kernel");
  kg->add_option("--size", ker.size)->capture_default_str()->check(CLI::PositiveNumber);
  kg->add_option("--sigma", ker.sigma)->capture_default_str()->check(CLI::PositiveNumber);
  kg->add_option("--out", ker.out);
  kg->callback([&] { action = [&] { return cmd_kernel_gaussian(ker); }; });
  auto* ki = ker_cmd->add_subcommand("invert", "check that the composed kernel is invertible");
  ki->add_option("--kernel", ker.kernel)->required();
  ki->add_option("--scale", ker.scale)->required()->check(CLI::PositiveNumber);
  ki->add_option("--grid", ker.grid, "LR grid side")->capture_default_str()->check(CLI::PositiveNumber);
  ki->add_flag("--report", ker.report, "print the spectrum summary");
  ki->callback([&] { action = [&] { return cmd_kernel_invert(ker); }; });

  // session
  SessionArgs sa;
  auto* sess_cmd = app.add_subcommand("session", "explorer sessions on disk")->require_subcommand(1);
  auto* sn = sess_cmd->add_subcommand("new", "create a session directory from an LR image");
  sn->add_option("--lr", sa.lr)->required();
  sn->add_option("--kernel", sa.kernel);
  sn->add_option("--scale", sa.scale)->required()->check(CLI::PositiveNumber);
  sn->add_option("--mode", sa.mode)->check(CLI::IsMember({"direct", "generator"}))->capture_default_str();
  sn->add_option("--boundary", sa.boundary)->check(CLI::IsMember({"periodic", "replicate"}))->capture_default_str();
  sn->add_option("--tau", sa.tau)->capture_default_str();
  sn->add_option("--history", sa.history)->capture_default_str()->check(CLI::PositiveNumber);
  sn->add_option("--weights", sa.weights, "generator JSON (default: toy generator from --seed)");
  sn->add_option("--out", sa.out, "session directory")->required();
  sn->callback([&] { action = [&] { return cmd_session_new(sa, g); }; });

  // edit
  EditArgs ea;
  auto* edit_cmd = app.add_subcommand("edit", "headless editing")->require_subcommand(1);
  auto* er = edit_cmd->add_subcommand("run", "run one edit job on a session");
  er->add_option("--session", ea.session)->required();
  er->add_option("--spec", ea.spec, "edit job JSON")->required();
  er->add_option("--out", ea.out, "write the session here instead of in place");
  er->add_option("--xhat", ea.xhat, "also save the edited image");
  er->callback([&] { action = [&] { return cmd_edit_run(ea); }; });
  auto* ealt = edit_cmd->add_subcommand("alternatives", "sample diverse consistent alternatives");
  ealt->add_option("--session", ea.session)->required();
  ealt->add_option("--n", ea.n)->capture_default_str()->check(CLI::Range(2, 64));
  ealt->add_option("--steps", ea.steps)->capture_default_str()->check(CLI::NonNegativeNumber);
  ealt->add_flag("--anchored", ea.anchored);
  ealt->add_option("--out", ea.out, "output directory")->required();
  ealt->callback([&] { action = [&] { return cmd_edit_alternatives(ea, g); }; });

  // metrics
  MetricArgs ma;
  auto* met_cmd = app.add_subcommand("metrics", "image metrics")->require_subcommand(1);
  for (const char* name : {"rmse", "psnr"}) {
    auto* m = met_cmd->add_subcommand(name, std::string(name) + " of each output against the reference");
    m->add_option("--ref", ma.ref)->required();
    m->add_option("--outputs", ma.outputs, "files or directories")->required();
    const bool psnr = std::string(name) == "psnr";
    m->callback([&, psnr] { action = [&, psnr] { return cmd_metric_pair(ma, psnr); }; });
  }
  auto* md = met_cmd->add_subcommand("diversity", "spread of a set of outputs in the nullspace");
  md->add_option("--ref", ma.ref, "optional reference for RMSE statistics");
  md->add_option("--outputs", ma.outputs)->required();
  md->add_option("--kernel", ma.kernel);
  md->add_option("--scale", ma.scale)->required()->check(CLI::PositiveNumber);
  md->add_option("--boundary", ma.boundary)->check(CLI::IsMember({"periodic", "replicate"}))->capture_default_str();
  md->callback([&] { action = [&] { return cmd_metric_diversity(ma); }; });

  // calibrate, train
  TrainArgs ta;
  auto* cal = app.add_subcommand("calibrate", "structure tensor percentiles over a corpus");
  cal->add_option("--images", ta.images, "files or directories")->required();
  cal->add_option("--out", ta.out, "output JSON (default: stdout)");
  cal->callback([&] { action = [&] { return cmd_calibrate(ta); }; });
  auto* train_cmd = app.add_subcommand("train", "training loops")->require_subcommand(1);
  auto* tt = train_cmd->add_subcommand("toy", "adversarial training of the toy generator");
  tt->add_option("--images", ta.images)->required();
  tt->add_option("--steps", ta.steps)->capture_default_str()->check(CLI::NonNegativeNumber);
  tt->add_option("--out", ta.out, "generator JSON")->required();
  tt->add_option("--scale", ta.scale)->capture_default_str()->check(CLI::PositiveNumber);
  tt->add_option("--crop", ta.crop)->capture_default_str()->check(CLI::PositiveNumber);
  tt->add_option("--batch", ta.batch)->capture_default_str()->check(CLI::PositiveNumber);
  tt->add_option("--features", ta.features)->capture_default_str()->check(CLI::PositiveNumber);
  tt->add_option("--kernel", ta.kernel);
  tt->add_option("--calibration", ta.calibration, "calibration JSON from 'calibrate'");
  tt->callback([&] { action = [&] { return cmd_train_toy(ta, g); }; });

  // gradcheck
  bool all = false;
  double tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss and edit objective");
  gc->add_flag("--all", all, "check every registered objective")->required();
  gc->add_option("--tol", tol, "relative tolerance")->capture_default_str();
  gc->callback([&] {
    action = [&] {
      bool passed = false;
      json j = cmd_gradcheck(tol, g, passed);
      if (!passed) exit_code = kNumeric;
      return j;
    };
  });

  // serve
  std::string addr, export_root = "cemx_exports";
  auto* sv = app.add_subcommand("serve", "HTTP session service");
  sv->add_option("--addr", addr, "host:port (default: $CEMX_ADDR or 127.0.0.1:8787)");
  sv->add_option("--export-root", export_root)->capture_default_str();
  bool serving = false;
  sv->callback([&] { serving = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (serving) return cmd_serve(addr, export_root);
    json out = action();
    emit(g, out);
    return exit_code;
  } catch (const Failure& f) {
    if (g.json) std::cout << json{{"error", f.name}, {"message", f.message}}.dump(2) << "\n";
    // Library messages already lead with the error name.
    const bool named = f.message.rfind(f.name, 0) == 0;
    std::cerr << "error: " << (named ? f.message : f.name + ": " + f.message) << "\n";
    return f.exit_code;
  } catch (const json::exception& e) {
    std::cerr << "error: InvalidParam: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return kData;
  }
}
