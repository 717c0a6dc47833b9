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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "cemx/cemx.h"

extern "C" int cemx_c_header_probe(void);

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Tmp {
  fs::path dir;
  Tmp() {
    dir = fs::temp_directory_path() / ("cemx_capi_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~Tmp() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

cemx_image* random_image(int w, int h, int c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> data(std::size_t(w) * h * c);
  for (auto& v : data) v = u(rng);
  cemx_image* img = nullptr;
  REQUIRE(cemx_image_create(w, h, c, data.data(), &img) == CEMX_OK);
  return img;
}

std::string take(char* s) {
  std::string out = s ? s : "";
  cemx_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("header compiles as C") { CHECK(cemx_c_header_probe() == 2); }

TEST_CASE("status names and last error") {
  CHECK(std::string(cemx_status_name(CEMX_OK)) == "Ok");
  CHECK(std::string(cemx_status_name(CEMX_ERR_SINGULAR_KERNEL)) == "SingularKernel");
  CHECK(std::string(cemx_status_name(CEMX_ERR_BUSY)) == "Busy");
  CHECK(std::string(cemx_status_name(static_cast<cemx_status>(42))) == "Unknown");

  CHECK(cemx_image_load(nullptr, nullptr) == CEMX_ERR_NULL_ARGUMENT);
  CHECK(std::string(cemx_last_error()).find("null argument") != std::string::npos);

  cemx_image* img = nullptr;
  CHECK(cemx_image_create(0, 4, 1, nullptr, &img) == CEMX_ERR_INVALID_DIMS);
  CHECK(img == nullptr);
  CHECK(std::string(cemx_last_error()).size() > 0);
  CHECK(cemx_image_create(4, 4, 1, nullptr, &img) == CEMX_OK);
  CHECK(std::string(cemx_last_error()).empty());
  cemx_image_free(img);

  CHECK(cemx_image_load("/nonexistent/x.png", &img) == CEMX_ERR_IO);
}

TEST_CASE("image round trip through the lossless raster") {
  Tmp tmp;
  cemx_image* a = random_image(5, 3, 2, 7);
  CHECK(cemx_image_width(a) == 5);
  CHECK(cemx_image_height(a) == 3);
  CHECK(cemx_image_channels(a) == 2);
  REQUIRE(cemx_image_save(a, (tmp / "a.cemz").c_str()) == CEMX_OK);
  cemx_image* b = nullptr;
  REQUIRE(cemx_image_load((tmp / "a.cemz").c_str(), &b) == CEMX_OK);
  for (int i = 0; i < 30; ++i) CHECK(cemx_image_data(a)[i] == cemx_image_data(b)[i]);
  double r = -1.0, p = 0.0;
  CHECK(cemx_rmse(a, b, &r) == CEMX_OK);
  CHECK(r == 0.0);
  CHECK(cemx_psnr(a, b, &p) == CEMX_OK);
  CHECK(std::isinf(p));
  cemx_image_free(a);
  cemx_image_free(b);
}

TEST_CASE("kernels and the inverse filter report") {
  Tmp tmp;
  cemx_kernel* k = nullptr;
  REQUIRE(cemx_kernel_bicubic(2, &k) == CEMX_OK);
  char* js = nullptr;
  REQUIRE(cemx_kernel_to_json(k, &js) == CEMX_OK);
  json doc = json::parse(take(js));
  CHECK(doc.at("taps").size() == doc.at("rows").get<std::size_t>() * doc.at("cols").get<std::size_t>());

  cemx_inverse_report rep{};
  REQUIRE(cemx_kernel_invert(k, 2, 16, &rep) == CEMX_OK);
  CHECK(rep.grid_rows == 16);
  CHECK(rep.min_magnitude > 0.0);
  CHECK(rep.max_magnitude >= rep.min_magnitude);
  CHECK(rep.floored_bins == 0);

  REQUIRE(cemx_kernel_save(k, (tmp / "k.json").c_str()) == CEMX_OK);
  cemx_kernel* k2 = nullptr;
  REQUIRE(cemx_kernel_load((tmp / "k.json").c_str(), 1, &k2) == CEMX_OK);
  cemx_kernel_free(k2);
  cemx_kernel_free(k);

  {
    std::ofstream f(tmp / "zero.json");
    f << R"({"rows":2,"cols":2,"taps":[0,0,0,0]})";
  }
  cemx_kernel* z = nullptr;
  REQUIRE(cemx_kernel_load((tmp / "zero.json").c_str(), 1, &z) == CEMX_OK);
  cemx_operator* op = nullptr;
  CHECK(cemx_operator_create(z, 2, 16, 16, CEMX_PERIODIC, &op) == CEMX_ERR_SINGULAR_KERNEL);
  CHECK(op == nullptr);
  CHECK(cemx_kernel_invert(z, 2, 8, &rep) == CEMX_ERR_SINGULAR_KERNEL);
  cemx_kernel_free(z);
}

TEST_CASE("operator: consistency, projection, diversity") {
  cemx_kernel* k = nullptr;
  REQUIRE(cemx_kernel_gaussian(5, 1.0, &k) == CEMX_OK);
  cemx_operator* op = nullptr;
  REQUIRE(cemx_operator_create(k, 2, 16, 16, CEMX_PERIODIC, &op) == CEMX_OK);

  cemx_image* y = random_image(8, 8, 3, 1);
  cemx_image* up = nullptr;
  REQUIRE(cemx_bicubic_upsample(y, 2, &up) == CEMX_OK);
  CHECK(cemx_image_width(up) == 16);
  cemx_image* xh = nullptr;
  REQUIRE(cemx_cem_apply(op, up, y, &xh) == CEMX_OK);
  cemx_residual res{};
  REQUIRE(cemx_consistency(op, xh, y, &res) == CEMX_OK);
  CHECK(res.linf <= 1e-8);
  CHECK(res.samples == 8 * 8 * 3);

  cemx_image* u = random_image(16, 16, 3, 2);
  cemx_image* pu = nullptr;
  cemx_image* ppu = nullptr;
  REQUIRE(cemx_project_nullspace(op, u, &pu) == CEMX_OK);
  REQUIRE(cemx_project_nullspace(op, pu, &ppu) == CEMX_OK);
  double r = 1.0;
  REQUIRE(cemx_rmse(pu, ppu, &r) == CEMX_OK);
  CHECK(r <= 1e-6);
  cemx_image* dpu = nullptr;
  REQUIRE(cemx_degrade(op, pu, &dpu) == CEMX_OK);
  double m = 0.0;
  for (int i = 0; i < 8 * 8 * 3; ++i) m = std::max(m, std::abs(cemx_image_data(dpu)[i]));
  CHECK(m <= 1e-8);

  // Outputs that differ only by a nullspace-free change have zero spread.
  const cemx_image* same[] = {xh, xh, xh};
  cemx_diversity_report d{};
  REQUIRE(cemx_diversity(op, same, 3, up, &d) == CEMX_OK);
  CHECK(d.sigma == 0.0);
  CHECK(d.rmse_mean > 0.0);

  CHECK(cemx_degrade(op, y, &dpu) != CEMX_OK);  // wrong dims

  for (auto* img : {y, up, xh, u, pu, ppu, dpu}) cemx_image_free(img);
  cemx_operator_free(op);
  cemx_kernel_free(k);
}

namespace {
struct Progress {
  int calls = 0;
  int stop_after = -1;
};
int on_progress(int, double, void* user) {
  auto* p = static_cast<Progress*>(user);
  ++p->calls;
  return p->stop_after < 0 || p->calls < p->stop_after;
}
}  // namespace

TEST_CASE("direct session: edit, undo, export, reload") {
  Tmp tmp;
  cemx_image* y = random_image(8, 8, 3, 3);
  cemx_kernel* k = nullptr;
  REQUIRE(cemx_kernel_bicubic(4, &k) == CEMX_OK);
  cemx_session_config cfg;
  cemx_session_config_default(&cfg);
  CHECK(cfg.factor == 4);
  CHECK(cfg.mode == CEMX_MODE_DIRECT);
  cemx_session* s = nullptr;
  REQUIRE(cemx_session_create(y, k, &cfg, nullptr, &s) == CEMX_OK);
  int w = 0, h = 0;
  REQUIRE(cemx_session_hr_size(s, &w, &h) == CEMX_OK);
  CHECK(w == 32);
  CHECK(h == 32);

  CHECK(cemx_session_undo(s) == CEMX_ERR_NOTHING_TO_UNDO);

  Progress prog;
  char* rep = nullptr;
  const char* spec = R"({"tool":"scribble","region":{"type":"rect","x":12,"y":6,"w":1,"h":20},)"
                     R"("params":{"color":[0.05]},"steps":30})";
  REQUIRE(cemx_session_run_edit(s, spec, on_progress, &prog, &rep) == CEMX_OK);
  json j = json::parse(take(rep));
  CHECK(j.at("tool") == "scribble");
  CHECK(j.at("accepted").get<int>() == prog.calls);
  CHECK(j.at("trace").back().get<double>() < j.at("initial").get<double>());

  cemx_residual res{};
  REQUIRE(cemx_session_consistency(s, &res) == CEMX_OK);
  CHECK(res.linf <= 1e-8);

  Progress stopper;
  stopper.stop_after = 3;
  REQUIRE(cemx_session_run_edit(s, spec, on_progress, &stopper, nullptr) == CEMX_OK);
  CHECK(stopper.calls == 3);

  CHECK(cemx_session_run_edit(s, R"({"tool":"nope"})", nullptr, nullptr, nullptr) == CEMX_ERR_INVALID_PARAM);
  CHECK(cemx_session_run_edit(s, "{not json", nullptr, nullptr, nullptr) == CEMX_ERR_INVALID_PARAM);
  CHECK(cemx_session_set_knobs(s, nullptr, 1, 1, 0, 0) == CEMX_ERR_INVALID_PARAM);  // generator-only

  cemx_image* before = nullptr;
  REQUIRE(cemx_session_x_hat(s, &before) == CEMX_OK);
  REQUIRE(cemx_session_export(s, (tmp / "sess").c_str()) == CEMX_OK);
  cemx_session* s2 = nullptr;
  REQUIRE(cemx_session_load((tmp / "sess").c_str(), &s2) == CEMX_OK);
  cemx_image* after = nullptr;
  REQUIRE(cemx_session_x_hat(s2, &after) == CEMX_OK);
  double r = 1.0;
  REQUIRE(cemx_rmse(before, after, &r) == CEMX_OK);
  CHECK(r == 0.0);

  REQUIRE(cemx_session_undo(s) == CEMX_OK);
  REQUIRE(cemx_session_alternatives(s, 3, 1, 5, 9) == CEMX_OK);
  cemx_image* alt = nullptr;
  REQUIRE(cemx_session_alternative(s, 2, &alt) == CEMX_OK);
  CHECK(cemx_image_width(alt) == 32);
  CHECK(cemx_session_alternative(s, 3, &alt) == CEMX_ERR_NOT_FOUND);
  REQUIRE(cemx_session_adopt(s, 1) == CEMX_OK);

  for (auto* img : {y, before, after, alt}) cemx_image_free(img);
  cemx_session_free(s);
  cemx_session_free(s2);
  cemx_kernel_free(k);
}

TEST_CASE("generator session and knobs") {
  Tmp tmp;
  cemx_generator* g = nullptr;
  REQUIRE(cemx_generator_toy(2, 3, 5, 0, 8, &g) == CEMX_OK);
  REQUIRE(cemx_generator_save(g, (tmp / "g.json").c_str()) == CEMX_OK);
  cemx_generator* g2 = nullptr;
  REQUIRE(cemx_generator_load((tmp / "g.json").c_str(), &g2) == CEMX_OK);

  cemx_image* y = random_image(8, 8, 3, 4);
  cemx_kernel* k = nullptr;
  REQUIRE(cemx_kernel_bicubic(2, &k) == CEMX_OK);
  cemx_session_config cfg;
  cemx_session_config_default(&cfg);
  cfg.factor = 2;
  cfg.mode = CEMX_MODE_GENERATOR;
  cemx_session* s = nullptr;
  CHECK(cemx_session_create(y, k, &cfg, nullptr, &s) == CEMX_ERR_INVALID_PARAM);
  REQUIRE(cemx_session_create(y, k, &cfg, g2, &s) == CEMX_OK);
  cemx_image* x0 = nullptr;
  cemx_image* x1 = nullptr;
  REQUIRE(cemx_session_x_hat(s, &x0) == CEMX_OK);
  REQUIRE(cemx_session_set_knobs(s, R"({"type":"rect","x":0,"y":0,"w":8,"h":8})", 1.0, 0.2, 0.5, 1) == CEMX_OK);
  REQUIRE(cemx_session_x_hat(s, &x1) == CEMX_OK);
  double r = 0.0;
  REQUIRE(cemx_rmse(x0, x1, &r) == CEMX_OK);
  CHECK(r > 0.0);
  cemx_residual res{};
  REQUIRE(cemx_session_consistency(s, &res) == CEMX_OK);
  CHECK(res.linf <= 1e-8);

  for (auto* img : {y, x0, x1}) cemx_image_free(img);
  cemx_session_free(s);
  cemx_kernel_free(k);
  cemx_generator_free(g);
  cemx_generator_free(g2);
}

TEST_CASE("calibration, training and the gradient suite") {
  std::vector<cemx_image*> imgs;
  for (unsigned i = 0; i < 3; ++i) imgs.push_back(random_image(24, 24, 3, 10 + i));
  std::vector<const cemx_image*> cimgs(imgs.begin(), imgs.end());

  char* cal = nullptr;
  REQUIRE(cemx_calibrate(cimgs.data(), cimgs.size(), &cal) == CEMX_OK);
  json cj = json::parse(take(cal));
  CHECK(cj.contains("s11"));
  CHECK(cemx_calibrate(nullptr, 0, &cal) != CEMX_OK);

  cemx_kernel* k = nullptr;
  REQUIRE(cemx_kernel_bicubic(2, &k) == CEMX_OK);
  cemx_generator* g = nullptr;
  char* rep = nullptr;
  REQUIRE(cemx_train_toy(cimgs.data(), cimgs.size(), k, R"({"steps":2,"batch":2,"crop":8,"map_iters":2})", &g,
                         &rep) == CEMX_OK);
  json tj = json::parse(take(rep));
  CHECK(tj.at("steps").size() == 2);
  CHECK(g != nullptr);
  CHECK(cemx_train_toy(cimgs.data(), cimgs.size(), k, R"({"steps":")", &g, nullptr) == CEMX_ERR_INVALID_PARAM);
  cemx_generator_free(g);
  cemx_kernel_free(k);
  for (auto* img : imgs) cemx_image_free(img);

  char* gj = nullptr;
  int ok = 0;
  REQUIRE(cemx_gradcheck_all(1, 1e-4, &gj, &ok) == CEMX_OK);
  json doc = json::parse(take(gj));
  CHECK(ok == 1);
  CHECK(doc.at("entries").size() >= 20);
}

TEST_CASE("server start and stop") {
  Tmp tmp;
  cemx_server* srv = nullptr;
  REQUIRE(cemx_server_create((tmp / "exports").c_str(), &srv) == CEMX_OK);
  int port = 0;
  REQUIRE(cemx_server_start(srv, "127.0.0.1:0", &port) == CEMX_OK);
  CHECK(port > 0);
  cemx_server_stop(srv);
  cemx_server_free(srv);

  REQUIRE(cemx_server_create(nullptr, &srv) == CEMX_OK);
  CHECK(cemx_server_start(srv, "127.0.0.1:notaport", &port) == CEMX_ERR_INVALID_PARAM);
  cemx_server_free(srv);
}
