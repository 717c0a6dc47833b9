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

#include "cemx/cemx.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <json.hpp>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "cemx/cem.hpp"
#include "cemx/error.hpp"
#include "cemx/explorer.hpp"
#include "cemx/generator.hpp"
#include "cemx/gradcheck_suite.hpp"
#include "cemx/image.hpp"
#include "cemx/kernel.hpp"
#include "cemx/losses.hpp"
#include "cemx/region.hpp"
#include "cemx/service.hpp"
#include "cemx/train.hpp"

struct cemx_image {
  cemx::Image img;
};
struct cemx_kernel {
  cemx::Kernel k;
};
struct cemx_operator {
  cemx::CemOperator op;
};
struct cemx_generator {
  cemx::GeneratorParams params;
};
struct cemx_session {
  std::unique_ptr<cemx::Session> s;
};
struct cemx_server {
  cemx::Service svc;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

struct NullArg {
  const char* name;
};

template <class F>
cemx_status guard(F&& f) noexcept {
  try {
    f();
    g_last_error.clear();
    return CEMX_OK;
  } catch (const NullArg& n) {
    g_last_error = std::string("null argument: ") + n.name;
    return CEMX_ERR_NULL_ARGUMENT;
  } catch (const cemx::Error& e) {
    g_last_error = e.what();
    return static_cast<cemx_status>(static_cast<int>(e.code()));
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return CEMX_ERR_INVALID_PARAM;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CEMX_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CEMX_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return CEMX_ERR_INTERNAL;
  }
}

template <class T>
T* need(T* p, const char* name) {
  if (!p) throw NullArg{name};
  return p;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

cemx_image* wrap(cemx::Image img) { return new cemx_image{std::move(img)}; }

cemx::BoundaryMode to_boundary(cemx_boundary b) {
  switch (b) {
    case CEMX_PERIODIC: return cemx::BoundaryMode::Periodic;
    case CEMX_REPLICATE: return cemx::BoundaryMode::Replicate;
  }
  throw cemx::Error(cemx::ErrorCode::InvalidParam, "unknown boundary mode");
}

void fill_residual(const cemx::Residual& r, cemx_residual* out) {
  out->linf = r.linf;
  out->rms = r.rms;
  out->samples = r.samples;
}

std::vector<cemx::Image> gather(const cemx_image* const* images, size_t count) {
  if (count > 0) need(images, "images");
  std::vector<cemx::Image> v;
  v.reserve(count);
  for (size_t i = 0; i < count; ++i) v.push_back(need(images[i], "images[i]")->img);
  return v;
}

void read_weights(const json& j, cemx::LossWeights& w) {
  w.range = j.value("range", w.range);
  w.structure = j.value("structure", w.structure);
  w.map = j.value("map", w.map);
  w.gp = j.value("gp", w.gp);
}

}  // namespace

extern "C" {

const char* cemx_version(void) { return "0.1.0"; }

const char* cemx_status_name(cemx_status status) {
  switch (status) {
    case CEMX_OK: return "Ok";
    case CEMX_ERR_NULL_ARGUMENT: return "NullArgument";
    case CEMX_ERR_INTERNAL: return "Internal";
    default: break;
  }
  int code = static_cast<int>(status);
  if (code >= 1 && code <= 13) return cemx::error_name(static_cast<cemx::ErrorCode>(code));
  return "Unknown";
}

const char* cemx_last_error(void) { return g_last_error.c_str(); }

void cemx_string_free(char* s) { std::free(s); }

// Images

cemx_status cemx_image_create(int width, int height, int channels, const double* data, cemx_image** out) {
  return guard([&] {
    need(out, "out");
    cemx::Image img(width, height, channels);
    if (data) std::memcpy(img.data().data(), data, img.size() * sizeof(double));
    *out = wrap(std::move(img));
  });
}

cemx_status cemx_image_load(const char* path, cemx_image** out) {
  return guard([&] { *need(out, "out") = wrap(cemx::load_image(need(path, "path"))); });
}

cemx_status cemx_image_save(const cemx_image* img, const char* path) {
  return guard([&] { cemx::save_image(need(img, "img")->img, need(path, "path")); });
}

void cemx_image_free(cemx_image* img) { delete img; }
int cemx_image_width(const cemx_image* img) { return img ? img->img.width() : 0; }
int cemx_image_height(const cemx_image* img) { return img ? img->img.height() : 0; }
int cemx_image_channels(const cemx_image* img) { return img ? img->img.channels() : 0; }
const double* cemx_image_data(const cemx_image* img) { return img ? img->img.data().data() : nullptr; }

// Kernels

cemx_status cemx_kernel_bicubic(int factor, cemx_kernel** out) {
  return guard([&] { *need(out, "out") = new cemx_kernel{cemx::bicubic_kernel(factor)}; });
}

cemx_status cemx_kernel_gaussian(int size, double sigma, cemx_kernel** out) {
  return guard([&] { *need(out, "out") = new cemx_kernel{cemx::gaussian_kernel(size, sigma)}; });
}

cemx_status cemx_kernel_load(const char* path, int normalize, cemx_kernel** out) {
  return guard([&] { *need(out, "out") = new cemx_kernel{cemx::load_kernel(need(path, "path"), normalize != 0)}; });
}

cemx_status cemx_kernel_save(const cemx_kernel* k, const char* path) {
  return guard([&] { cemx::save_kernel(need(k, "k")->k, need(path, "path")); });
}

cemx_status cemx_kernel_to_json(const cemx_kernel* k, char** out) {
  return guard([&] { *need(out, "out") = dup_string(cemx::kernel_to_json(need(k, "k")->k)); });
}

void cemx_kernel_free(cemx_kernel* k) { delete k; }

cemx_status cemx_kernel_invert(const cemx_kernel* k, int factor, int grid, cemx_inverse_report* out) {
  return guard([&] {
    need(out, "out");
    if (factor < 1 || grid < 1) throw cemx::Error(cemx::ErrorCode::InvalidParam, "factor and grid must be positive");
    cemx::InvFilter f = cemx::invert_composed(need(k, "k")->k, factor, grid, grid);
    out->grid_rows = f.grid_rows;
    out->grid_cols = f.grid_cols;
    out->min_magnitude = f.min_magnitude;
    out->max_magnitude = f.max_magnitude;
    out->eps = f.eps;
    out->floored_bins = f.floored_bins;
  });
}

// Operator

cemx_status cemx_operator_create(const cemx_kernel* k, int factor, int hr_width, int hr_height,
                                 cemx_boundary boundary, cemx_operator** out) {
  return guard([&] {
    need(out, "out");
    *out = new cemx_operator{cemx::build_cem(need(k, "k")->k, factor, hr_width, hr_height, to_boundary(boundary))};
  });
}

void cemx_operator_free(cemx_operator* op) { delete op; }

cemx_status cemx_degrade(const cemx_operator* op, const cemx_image* x, cemx_image** out) {
  return guard([&] { *need(out, "out") = wrap(cemx::degrade(need(op, "op")->op, need(x, "x")->img)); });
}

cemx_status cemx_cem_apply(const cemx_operator* op, const cemx_image* x_inc, const cemx_image* y, cemx_image** out) {
  return guard([&] {
    *need(out, "out") = wrap(cemx::cem_apply(need(op, "op")->op, need(x_inc, "x_inc")->img, need(y, "y")->img));
  });
}

cemx_status cemx_project_nullspace(const cemx_operator* op, const cemx_image* u, cemx_image** out) {
  return guard([&] { *need(out, "out") = wrap(cemx::project_nullspace(need(op, "op")->op, need(u, "u")->img)); });
}

cemx_status cemx_consistency(const cemx_operator* op, const cemx_image* x_hat, const cemx_image* y,
                             cemx_residual* out) {
  return guard([&] {
    fill_residual(cemx::consistency_residual(need(op, "op")->op, need(x_hat, "x_hat")->img, need(y, "y")->img),
                  need(out, "out"));
  });
}

cemx_status cemx_bicubic_upsample(const cemx_image* y, int factor, cemx_image** out) {
  return guard([&] { *need(out, "out") = wrap(cemx::bicubic_upsample(need(y, "y")->img, factor)); });
}

// Metrics

cemx_status cemx_rmse(const cemx_image* a, const cemx_image* b, double* out) {
  return guard([&] { *need(out, "out") = cemx::rmse(need(a, "a")->img, need(b, "b")->img); });
}

cemx_status cemx_psnr(const cemx_image* a, const cemx_image* b, double* out) {
  return guard([&] { *need(out, "out") = cemx::psnr(need(a, "a")->img, need(b, "b")->img); });
}

cemx_status cemx_diversity(const cemx_operator* op, const cemx_image* const* outputs, size_t count,
                           const cemx_image* reference, cemx_diversity_report* out) {
  return guard([&] {
    need(out, "out");
    auto imgs = gather(outputs, count);
    auto rep = cemx::diversity_metric(imgs, need(op, "op")->op, reference ? &reference->img : nullptr);
    out->sigma = rep.sigma;
    out->rmse_mean = rep.rmse_mean;
    out->rmse_std = rep.rmse_std;
  });
}

// Generators

cemx_status cemx_generator_toy(int factor, int channels, uint64_t seed, int zero_z_weights, int features,
                               cemx_generator** out) {
  return guard([&] {
    *need(out, "out") =
        new cemx_generator{cemx::GeneratorParams::toy(factor, channels, seed, zero_z_weights != 0, features)};
  });
}

cemx_status cemx_generator_load(const char* path, cemx_generator** out) {
  return guard([&] { *need(out, "out") = new cemx_generator{cemx::load_generator(need(path, "path"))}; });
}

cemx_status cemx_generator_save(const cemx_generator* g, const char* path) {
  return guard([&] { cemx::save_generator(need(g, "g")->params, need(path, "path")); });
}

void cemx_generator_free(cemx_generator* g) { delete g; }

// Sessions

void cemx_session_config_default(cemx_session_config* cfg) {
  if (!cfg) return;
  cemx::SessionConfig d;
  cfg->factor = d.factor;
  cfg->boundary = d.boundary == cemx::BoundaryMode::Periodic ? CEMX_PERIODIC : CEMX_REPLICATE;
  cfg->mode = d.mode == cemx::SessionMode::Generator ? CEMX_MODE_GENERATOR : CEMX_MODE_DIRECT;
  cfg->tau = d.tau;
  cfg->history_limit = static_cast<int>(d.history_limit);
}

cemx_status cemx_session_create(const cemx_image* y, const cemx_kernel* k, const cemx_session_config* cfg,
                                const cemx_generator* generator, cemx_session** out) {
  return guard([&] {
    need(out, "out");
    cemx::SessionConfig c;
    if (cfg) {
      if (cfg->history_limit < 1) throw cemx::Error(cemx::ErrorCode::InvalidParam, "history_limit must be >= 1");
      c.factor = cfg->factor;
      c.boundary = to_boundary(cfg->boundary);
      c.mode = cfg->mode == CEMX_MODE_GENERATOR ? cemx::SessionMode::Generator : cemx::SessionMode::DirectParam;
      c.tau = cfg->tau;
      c.history_limit = static_cast<std::size_t>(cfg->history_limit);
    }
    if (generator) c.generator = generator->params;
    auto s = std::make_unique<cemx::Session>(need(y, "y")->img, need(k, "k")->k, std::move(c));
    *out = new cemx_session{std::move(s)};
  });
}

cemx_status cemx_session_load(const char* dir, cemx_session** out) {
  return guard([&] { *need(out, "out") = new cemx_session{cemx::Session::load(need(dir, "dir"))}; });
}

cemx_status cemx_session_export(const cemx_session* s, const char* dir) {
  return guard([&] { need(s, "s")->s->export_to(need(dir, "dir")); });
}

void cemx_session_free(cemx_session* s) { delete s; }

cemx_status cemx_session_hr_size(const cemx_session* s, int* width, int* height) {
  return guard([&] {
    need(s, "s");
    *need(width, "width") = s->s->hr_width();
    *need(height, "height") = s->s->hr_height();
  });
}

cemx_status cemx_session_x_hat(const cemx_session* s, cemx_image** out) {
  return guard([&] { *need(out, "out") = wrap(need(s, "s")->s->x_hat()); });
}

cemx_status cemx_session_latent(const cemx_session* s, cemx_image** out) {
  return guard([&] { *need(out, "out") = wrap(need(s, "s")->s->latent()); });
}

cemx_status cemx_session_consistency(const cemx_session* s, cemx_residual* out) {
  return guard([&] { fill_residual(need(s, "s")->s->consistency(), need(out, "out")); });
}

cemx_status cemx_session_run_edit(cemx_session* s, const char* spec_json, cemx_progress_fn progress, void* user,
                                  char** report_json) {
  return guard([&] {
    need(s, "s");
    auto& sess = *s->s;
    auto spec = cemx::parse_edit_spec(need(spec_json, "spec_json"), sess.hr_width(), sess.hr_height(),
                                      sess.y().channels());
    std::function<bool(int, double)> cb;
    if (progress) cb = [&](int step, double v) { return progress(step, v, user) != 0; };
    cemx::JobReport rep = sess.run_edit(spec, cb);
    if (report_json) {
      json j{{"tool", cemx::tool_name(spec.tool)},
             {"accepted", rep.accepted},
             {"rejected", rep.rejected},
             {"stalled", rep.stalled},
             {"initial", rep.initial},
             {"initial_objective", rep.initial_objective},
             {"trace", rep.trace},
             {"objective", rep.objective}};
      *report_json = dup_string(j.dump());
    }
  });
}

cemx_status cemx_session_set_knobs(cemx_session* s, const char* region_json, double l1, double l2, double theta,
                                   int eigen_mode) {
  return guard([&] {
    auto& sess = *need(s, "s")->s;
    cemx::RegionMask region = region_json ? cemx::region_from_json(region_json, sess.hr_width(), sess.hr_height())
                                          : cemx::full_region(sess.hr_width(), sess.hr_height());
    sess.set_knobs(region, l1, l2, theta, eigen_mode ? cemx::ComposeMode::Eigen : cemx::ComposeMode::Product);
  });
}

cemx_status cemx_session_undo(cemx_session* s) {
  return guard([&] { need(s, "s")->s->undo(); });
}

cemx_status cemx_session_alternatives(cemx_session* s, int n, int anchored, int steps, uint64_t seed) {
  return guard([&] {
    cemx::AlternativesOptions o;
    o.n = n;
    o.anchored = anchored != 0;
    o.steps = steps;
    o.seed = seed;
    need(s, "s")->s->diverse_alternatives(o);
  });
}

cemx_status cemx_session_alternative(const cemx_session* s, size_t index, cemx_image** out) {
  return guard([&] { *need(out, "out") = wrap(need(s, "s")->s->alternative_image(index)); });
}

cemx_status cemx_session_adopt(cemx_session* s, size_t index) {
  return guard([&] { need(s, "s")->s->adopt_alternative(index); });
}

// Losses and training

cemx_status cemx_calibrate(const cemx_image* const* images, size_t count, char** json_out) {
  return guard([&] {
    need(json_out, "json_out");
    auto cal = cemx::calibrate_percentiles(gather(images, count));
    *json_out = dup_string(cemx::calibration_to_json(cal));
  });
}

cemx_status cemx_train_toy(const cemx_image* const* images, size_t count, const cemx_kernel* k,
                           const char* options_json, cemx_generator** out, char** report_json) {
  return guard([&] {
    need(out, "out");
    need(k, "k");
    cemx::TrainOptions o;
    if (options_json) {
      json j = json::parse(options_json);
      o.factor = j.value("factor", o.factor);
      o.crop = j.value("crop", o.crop);
      o.batch = j.value("batch", o.batch);
      o.steps = j.value("steps", o.steps);
      o.features = j.value("features", o.features);
      o.gen_lr = j.value("gen_lr", o.gen_lr);
      o.critic_lr = j.value("critic_lr", o.critic_lr);
      o.max_critic_batches = j.value("max_critic_batches", o.max_critic_batches);
      o.map_iters = j.value("map_iters", o.map_iters);
      o.seed = j.value("seed", o.seed);
      if (j.contains("weights")) read_weights(j.at("weights"), o.weights);
      if (j.contains("calibration")) o.calibration = cemx::calibration_from_json(j.at("calibration").dump());
    }
    cemx::TrainResult r = cemx::train_toy(gather(images, count), k->k, o);
    if (report_json) {
      json steps = json::array();
      for (const auto& st : r.steps)
        steps.push_back({{"critic_batches", st.critic_batches},
                         {"generator_step", st.generator_step},
                         {"adv", st.losses.adv},
                         {"range", st.losses.range},
                         {"structure", st.losses.structure},
                         {"map", st.losses.map},
                         {"total", st.total}});
      json j{{"steps", steps}, {"critic_batches", r.critic_outcomes.size()}};
      *report_json = dup_string(j.dump());
    }
    *out = new cemx_generator{std::move(r.params)};
  });
}

cemx_status cemx_gradcheck_all(uint64_t seed, double tol, char** report_json, int* all_passed) {
  return guard([&] {
    auto results = cemx::run_gradcheck_suite(seed, tol);
    bool ok = true;
    json entries = json::array();
    for (const auto& r : results) {
      ok = ok && r.report.passed;
      entries.push_back({{"name", r.name},
                         {"passed", r.report.passed},
                         {"max_rel_error", r.report.max_rel_error},
                         {"max_abs_error", r.report.max_abs_error},
                         {"coordinates", r.report.coordinates}});
    }
    if (all_passed) *all_passed = ok ? 1 : 0;
    if (report_json) {
      json j{{"seed", seed}, {"tolerance", tol}, {"passed", ok}, {"entries", entries}};
      *report_json = dup_string(j.dump());
    }
  });
}

// HTTP service

cemx_status cemx_server_create(const char* export_root, cemx_server** out) {
  return guard([&] {
    need(out, "out");
    cemx::ServiceOptions o;
    if (export_root) o.export_root = export_root;
    *out = new cemx_server{cemx::Service(o)};
  });
}

cemx_status cemx_server_start(cemx_server* srv, const char* addr, int* port) {
  return guard([&] {
    auto a = addr ? cemx::parse_address(addr) : cemx::default_address();
    int p = need(srv, "srv")->svc.start(a);
    if (port) *port = p;
  });
}

cemx_status cemx_server_run(cemx_server* srv, const char* addr) {
  return guard([&] {
    auto a = addr ? cemx::parse_address(addr) : cemx::default_address();
    need(srv, "srv")->svc.run(a);
  });
}

void cemx_server_stop(cemx_server* srv) {
  if (srv) srv->svc.stop();
}

void cemx_server_free(cemx_server* srv) { delete srv; }

}  // extern "C"
