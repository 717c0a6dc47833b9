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

#include "cemx/explorer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include <json.hpp>
#include <openssl/evp.h>

#include "cemx/error.hpp"
#include "cemx/region.hpp"
#include "region_json.hpp"
#include "text_io.hpp"

namespace cemx {

using ad::NodeId;
using ad::Tape;
using nlohmann::json;

const char* mode_name(SessionMode m) noexcept { return m == SessionMode::Generator ? "generator" : "direct"; }

SessionMode parse_mode(const std::string& s) {
  if (s == "generator") return SessionMode::Generator;
  if (s == "direct" || s == "direct_param") return SessionMode::DirectParam;
  throw Error(ErrorCode::InvalidParam, "unknown session mode '" + s + "'");
}

const char* boundary_name(BoundaryMode b) noexcept { return b == BoundaryMode::Periodic ? "periodic" : "replicate"; }

BoundaryMode parse_boundary(const std::string& s) {
  if (s == "periodic") return BoundaryMode::Periodic;
  if (s == "replicate") return BoundaryMode::Replicate;
  throw Error(ErrorCode::InvalidParam, "unknown boundary '" + s + "'");
}

namespace {

struct ToolName {
  Tool tool;
  const char* name;
};
constexpr ToolName kTools[] = {
    {Tool::Scribble, "scribble"},   {Tool::Brighten, "brighten"},       {Tool::Darken, "darken"},
    {Tool::TvMin, "tv_min"},        {Tool::Variance, "variance"},       {Tool::Magnitude, "magnitude"},
    {Tool::Imprint, "imprint"},     {Tool::PatchCollection, "patch_collection"},
    {Tool::Periodicity, "periodicity"},
};

Tool parse_tool(const std::string& s) {
  for (const auto& t : kTools)
    if (s == t.name) return t.tool;
  throw Error(ErrorCode::InvalidParam, "unknown tool '" + s + "'");
}

std::string base64_decode(std::string in) {
  std::erase_if(in, [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  if (in.size() % 4 != 0) throw Error(ErrorCode::InvalidParam, "base64 length is not a multiple of 4");
  std::string out(in.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
  if (n < 0) throw Error(ErrorCode::InvalidParam, "malformed base64");
  std::size_t pad = 0;
  for (auto it = in.rbegin(); it != in.rend() && *it == '='; ++it) ++pad;
  out.resize(std::size_t(n) - pad);
  return out;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

Image load_content(const json& c, int channels) {
  Image img;
  if (c.is_string() && c.get<std::string>() == "self") return {};
  if (c.is_object() && c.contains("png_base64"))
    img = decode_png(base64_decode(c.at("png_base64").get<std::string>()));
  else if (c.is_object() && c.contains("file"))
    img = load_image(c.at("file").get<std::string>());
  else
    throw Error(ErrorCode::InvalidParam, "imprint content must be \"self\", {\"png_base64\"} or {\"file\"}");
  if (img.channels() == channels) return img;
  if (img.channels() == 1) {
    Image out(img.width(), img.height(), channels);
    for (int k = 0; k < channels; ++k) std::copy(img.plane(0).begin(), img.plane(0).end(), out.plane(k).begin());
    return out;
  }
  if (channels == 1) return to_luma(img);
  throw Error(ErrorCode::InvalidDims, "imprint content has an incompatible channel count");
}

}  // namespace

const char* tool_name(Tool t) noexcept {
  for (const auto& e : kTools)
    if (e.tool == t) return e.name;
  return "?";
}

EditJobSpec parse_edit_spec(const std::string& text, int width, int height, int channels) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("edit spec is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("tool")) throw Error(ErrorCode::InvalidParam, "edit spec needs a tool");
    EditJobSpec s;
    s.tool = parse_tool(doc.at("tool").get<std::string>());
    const json params = doc.value("params", json::object());
    if (!params.is_object()) throw Error(ErrorCode::InvalidParam, "params must be an object");

    s.steps = doc.value("steps", 50);
    s.step_size = doc.value("step_size", 1.0);
    if (s.steps < 0) throw Error(ErrorCode::InvalidParam, "steps must be >= 0");
    if (!(s.step_size > 0.0) || !std::isfinite(s.step_size)) throw Error(ErrorCode::InvalidParam, "step_size must be > 0");
    const std::string opt = doc.value("optimizer", std::string("backtracking"));
    if (opt == "backtracking")
      s.rule = StepRule::Backtracking;
    else if (opt == "adam")
      s.rule = StepRule::Adam;
    else
      throw Error(ErrorCode::InvalidParam, "unknown optimizer '" + opt + "'");
    s.polyak = doc.value("polyak", false);
    if (doc.contains("tau")) {
      s.tau = doc.at("tau").get<double>();
      if (!(*s.tau >= 0.0)) throw Error(ErrorCode::InvalidParam, "tau must be >= 0");
    }

    switch (s.tool) {
      case Tool::Scribble: {
        if (!params.contains("color")) throw Error(ErrorCode::InvalidParam, "scribble needs params.color");
        const json& c = params.at("color");
        s.color = c.is_array() ? c.get<std::vector<double>>() : std::vector<double>{c.get<double>()};
        if (s.color.size() != 1 && s.color.size() != std::size_t(channels))
          throw Error(ErrorCode::InvalidParam, "scribble color needs 1 or " + std::to_string(channels) + " entries");
        break;
      }
      case Tool::Brighten:
      case Tool::Darken:
        s.factor = get_or(params, "factor", s.tool == Tool::Brighten ? 1.2 : 0.8);
        break;
      case Tool::TvMin:
        break;
      case Tool::Variance:
        if (!params.contains("delta")) throw Error(ErrorCode::InvalidParam, "variance needs params.delta");
        s.delta = params.at("delta").get<double>();
        s.stride = get_or(params, "stride", 1);
        break;
      case Tool::Magnitude:
        if (!params.contains("factor")) throw Error(ErrorCode::InvalidParam, "magnitude needs params.factor");
        s.factor = params.at("factor").get<double>();
        s.stride = get_or(params, "stride", 4);
        break;
      case Tool::Imprint: {
        if (!params.contains("rect")) throw Error(ErrorCode::InvalidParam, "imprint needs params.rect");
        s.placement.rect = detail::rect_from_json(params.at("rect"));
        if (params.contains("offset")) {
          const auto o = params.at("offset").get<std::vector<int>>();
          if (o.size() != 2) throw Error(ErrorCode::InvalidParam, "imprint offset is [dx, dy]");
          s.placement.dx = o[0];
          s.placement.dy = o[1];
        }
        if (params.contains("resize")) {
          const auto r = params.at("resize").get<std::vector<int>>();
          if (r.size() != 2) throw Error(ErrorCode::InvalidParam, "imprint resize is [dw, dh]");
          s.placement.dw = r[0];
          s.placement.dh = r[1];
        }
        if (params.contains("content")) {
          Image c = load_content(params.at("content"), channels);
          if (!c.empty()) s.content = std::move(c);
        }
        break;
      }
      case Tool::PatchCollection: {
        if (!params.contains("source_region")) throw Error(ErrorCode::InvalidParam, "patch_collection needs params.source_region");
        s.source_region = detail::region_from_json(params.at("source_region"), width, height);
        const std::string v = get_or(params, "variant", std::string("plain"));
        if (v == "plain")
          s.variant = PatchVariant::Plain;
        else if (v == "variance_preserving")
          s.variant = PatchVariant::VariancePreserving;
        else
          throw Error(ErrorCode::InvalidParam, "unknown patch variant '" + v + "'");
        break;
      }
      case Tool::Periodicity: {
        const auto dirs = get_or(params, "directions", std::vector<std::vector<int>>{{1, 0}});
        for (const auto& d : dirs) {
          if (d.size() != 2 || (d[0] == 0 && d[1] == 0))
            throw Error(ErrorCode::InvalidParam, "directions are non-zero [dx, dy] pairs");
          s.directions.push_back({d[0], d[1]});
        }
        s.periods = get_or(params, "periods", std::vector<int>{});
        if (!s.periods.empty() && s.periods.size() != s.directions.size())
          throw Error(ErrorCode::InvalidParam, "periods and directions differ in length");
        break;
      }
    }

    if (doc.contains("region"))
      s.region = detail::region_from_json(doc.at("region"), width, height);
    else if (s.tool == Tool::Imprint)
      s.region = rect_region(width, height, s.placement.target());
    else
      s.region = full_region(width, height);
    s.latent_region = doc.contains("latent_region") ? detail::region_from_json(doc.at("latent_region"), width, height)
                                                    : s.region;
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("edit spec: ") + e.what());
  }
}

std::array<double, 3> encode_knobs(const StructureTensor& sd) {
  return {2.0 * sd.s11 - 1.0, 2.0 * sd.s12, 2.0 * sd.s22 - 1.0};
}

StructureTensor decode_knobs(const std::array<double, 3>& z) {
  return {(z[0] + 1.0) / 2.0, z[1] / 2.0, (z[2] + 1.0) / 2.0};
}

class Session::BusyGuard {
 public:
  explicit BusyGuard(std::atomic<bool>& flag) : flag_(flag) {
    bool expected = false;
    if (!flag_.compare_exchange_strong(expected, true)) throw Error(ErrorCode::Busy, "session is running a job");
  }
  ~BusyGuard() { flag_.store(false); }
  BusyGuard(const BusyGuard&) = delete;
  BusyGuard& operator=(const BusyGuard&) = delete;

 private:
  std::atomic<bool>& flag_;
};

Session::Session(Image y, const Kernel& h, SessionConfig cfg) : y_(std::move(y)), cfg_(std::move(cfg)) {
  if (y_.empty()) throw Error(ErrorCode::InvalidDims, "empty LR image");
  if (cfg_.factor < 1) throw Error(ErrorCode::InvalidParam, "scale factor must be >= 1");
  if (!(cfg_.tau >= 0.0)) throw Error(ErrorCode::InvalidParam, "tau must be >= 0");
  if (cfg_.history_limit == 0) throw Error(ErrorCode::InvalidParam, "history limit must be >= 1");
  if (cfg_.mode == SessionMode::Generator) {
    if (!cfg_.generator) throw Error(ErrorCode::InvalidParam, "generator mode needs generator parameters");
    cfg_.generator->validate();
    if (cfg_.generator->factor != cfg_.factor) throw Error(ErrorCode::InvalidDims, "generator scale differs from session scale");
    if (cfg_.generator->channels != y_.channels())
      throw Error(ErrorCode::InvalidDims, "generator channels differ from the image");
  }
  op_ = std::make_shared<const CemOperator>(h, cfg_.factor, y_.width() * cfg_.factor, y_.height() * cfg_.factor,
                                            cfg_.boundary, cfg_.pad_lr);
  offset_ = cem_offset(*op_, y_);
  latent_ = cfg_.mode == SessionMode::Generator ? zero_control(hr_width(), hr_height())
                                                : Image(hr_width(), hr_height(), y_.channels());
  x_hat_ = render(latent_);
}

Image Session::render(const Image& latent) const {
  if (cfg_.mode == SessionMode::Generator) return generate(*cfg_.generator, y_, latent, *op_).x_hat;
  return direct_param(y_, latent, *op_);
}

void Session::refresh_locked() { x_hat_ = render(latent_); }

void Session::push_history_locked() {
  history_.push_back(latent_);
  if (history_.size() > cfg_.history_limit) history_.erase(history_.begin());
}

Image Session::x_hat() const {
  std::lock_guard lock(mu_);
  return x_hat_;
}

Image Session::latent() const {
  std::lock_guard lock(mu_);
  return latent_;
}

Residual Session::consistency() const { return consistency_residual(*op_, x_hat(), y_); }

std::size_t Session::history_size() const {
  std::lock_guard lock(mu_);
  return history_.size();
}

void Session::set_knobs(const RegionMask& region, double l1, double l2, double theta, ComposeMode mode) {
  if (cfg_.mode != SessionMode::Generator) throw Error(ErrorCode::InvalidParam, "knobs steer a generator's control signal");
  if (region.width() != hr_width() || region.height() != hr_height() || region.channels() != 1)
    throw Error(ErrorCode::InvalidParam, "knob region does not match the HR image");
  const auto z = encode_knobs(compose_Sd(l1, l2, theta, mode));
  BusyGuard busy(busy_);
  std::lock_guard lock(mu_);
  Image next = latent_;
  for (std::size_t p = 0; p < region.size(); ++p)
    if (region[p] > 0.0)
      for (int c = 0; c < kControlChannels; ++c) next[c * region.size() + p] = z[c];
  Image xh = render(next);
  push_history_locked();
  latent_ = std::move(next);
  x_hat_ = std::move(xh);
}

void Session::set_latent(Image latent) {
  {
    std::lock_guard lock(mu_);
    if (!latent.same_shape(latent_)) throw Error(ErrorCode::InvalidDims, "latent shape differs from the session's");
  }
  BusyGuard busy(busy_);
  Image xh = render(latent);
  std::lock_guard lock(mu_);
  push_history_locked();
  latent_ = std::move(latent);
  x_hat_ = std::move(xh);
}

Image Session::undo() {
  BusyGuard busy(busy_);
  std::lock_guard lock(mu_);
  if (history_.empty()) throw Error(ErrorCode::NothingToUndo, "history is empty");
  latent_ = std::move(history_.back());
  history_.pop_back();
  refresh_locked();
  return x_hat_;
}

namespace {

Image fill_color(int w, int h, const std::vector<double>& color, int channels) {
  Image t(w, h, channels);
  for (int c = 0; c < channels; ++c) {
    const double v = color.size() == 1 ? color[0] : color[std::size_t(c)];
    std::fill(t.plane(c).begin(), t.plane(c).end(), v);
  }
  return t;
}

void check_region(const RegionMask& r, int w, int h, const char* what) {
  if (r.width() != w || r.height() != h || r.channels() != 1)
    throw Error(ErrorCode::InvalidParam, std::string(what) + " does not match the HR image");
}

}  // namespace

JobReport Session::run_edit(const EditJobSpec& spec, std::function<bool(int, double)> on_step) {
  const int W = hr_width(), H = hr_height(), C = y_.channels();
  check_region(spec.region, W, H, "edit region");
  check_region(spec.latent_region, W, H, "latent region");
  BusyGuard busy(busy_);

  Image x0, start;
  {
    std::lock_guard lock(mu_);
    x0 = x_hat_;
    start = latent_;
  }

  // Everything that depends only on the start image is computed once here.
  Image baseline;
  std::vector<int> periods = spec.periods;
  if (spec.tool == Tool::Imprint) {
    const Image content = spec.content ? *spec.content : crop(x0, spec.placement.rect);
    baseline = imprint_baseline(*op_, y_, x0, content, spec.placement);
  }
  if (spec.tool == Tool::Periodicity && periods.empty())
    for (const Direction& d : spec.directions) periods.push_back(estimate_period(x0, spec.region, d));

  const double tau = spec.tau.value_or(cfg_.tau);
  NodeId objective_node = 0;
  auto build = [&](Tape& t, NodeId n) -> NodeId {
    NodeId xh, reg;
    if (cfg_.mode == SessionMode::Generator) {
      xh = generate_on_tape(*cfg_.generator, y_, n, op_, t).x_hat;
      reg = range_loss(t, xh);
    } else {
      const NodeId lin = t.cem_linear(n, op_);
      xh = t.add(lin, t.constant(offset_));
      reg = total_variation(t, lin);
    }
    NodeId obj = 0;
    switch (spec.tool) {
      case Tool::Scribble:
        obj = scribble_objective(t, xh, {spec.region, fill_color(W, H, spec.color, C), ScribbleKind::Color});
        break;
      case Tool::Brighten:
        obj = brightness_objective(t, xh, x0, {spec.region, {}, ScribbleKind::Brighten}, spec.factor);
        break;
      case Tool::Darken:
        obj = brightness_objective(t, xh, x0, {spec.region, {}, ScribbleKind::Darken}, spec.factor);
        break;
      case Tool::TvMin:
        obj = local_tv_objective(t, xh, {spec.region, {}, ScribbleKind::TvMin});
        break;
      case Tool::Variance: {
        const int s = spec.stride > 0 ? spec.stride : 1;
        obj = variance_objective(t, xh, x0, spec.region, spec.delta, {s, s});
        break;
      }
      case Tool::Magnitude: {
        const int s = spec.stride > 0 ? spec.stride : 4;
        obj = magnitude_objective(t, xh, x0, spec.region, spec.factor, {s, s});
        break;
      }
      case Tool::Imprint:
        obj = imprint_objective(t, xh, baseline, spec.placement.target());
        break;
      case Tool::PatchCollection:
        obj = patch_collection_objective(t, xh, x0, spec.region, x0, spec.source_region, spec.variant);
        break;
      case Tool::Periodicity:
        obj = periodicity_objective(t, xh, spec.region, spec.directions, periods);
        break;
    }
    objective_node = obj;
    return tau > 0.0 ? t.add(obj, t.scale(reg, tau)) : obj;
  };

  JobReport report;
  TapeObjective f(start, build);
  report.initial = f.value(start);
  report.initial_objective = f.tape().scalar(objective_node);

  DescentOptions opts;
  opts.steps = spec.steps;
  opts.step = spec.step_size;
  opts.rule = spec.rule;
  opts.polyak = spec.polyak;
  opts.mask = &spec.latent_region;
  opts.on_step = [&](int step, double value) {
    report.objective.push_back(f.tape().scalar(objective_node));
    return on_step ? on_step(step, value) : true;
  };

  DescentResult r = descend(f, start, opts);
  report.trace = std::move(r.trace);
  report.rejected = r.rejected;
  report.stalled = r.stalled;
  report.accepted = static_cast<int>(report.trace.size());

  Image xh = render(r.latent);
  std::lock_guard lock(mu_);
  push_history_locked();
  latent_ = std::move(r.latent);
  x_hat_ = std::move(xh);
  return report;
}

std::vector<Alternative> Session::diverse_alternatives(const AlternativesOptions& o) {
  if (o.n < 2 || o.n > 8) throw Error(ErrorCode::InvalidParam, "alternatives need 2 to 8 outputs");
  if (o.steps < 0) throw Error(ErrorCode::InvalidParam, "steps must be >= 0");
  if (!(o.init_amplitude > 0.0)) throw Error(ErrorCode::InvalidParam, "init amplitude must be > 0");
  BusyGuard busy(busy_);
  Image cur, x_cur;
  {
    std::lock_guard lock(mu_);
    cur = latent_;
    x_cur = x_hat_;
  }
  const int W = cur.width(), H = cur.height(), L = cur.channels();

  // Pairs start from +r and -r around the current latent; an odd one out
  // starts at the current latent itself.
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> dist(-o.init_amplitude, o.init_amplitude);
  Image joint;
  for (int k = 0; k < o.n; ++k) {
    Image lk = cur;
    if (k % 2 == 0 && k + 1 < o.n) {
      Image r(W, H, L);
      for (auto& v : r.data()) v = dist(rng);
      Image a = cur + r, b = cur - r;
      joint = joint.empty() ? a : concat_channels(joint, a);
      joint = concat_channels(joint, b);
      ++k;
      continue;
    }
    joint = joint.empty() ? lk : concat_channels(joint, lk);
  }

  const double n_out = o.n;
  auto build = [&](Tape& t, NodeId all) -> NodeId {
    std::vector<NodeId> outs;
    std::vector<NodeId> penalties;
    for (int k = 0; k < o.n; ++k) {
      const NodeId lk = t.slice(all, ad::SliceSpec{k * L, L, Rect{0, 0, W, H}});
      NodeId xh;
      if (cfg_.mode == SessionMode::Generator)
        xh = generate_on_tape(*cfg_.generator, y_, lk, op_, t).x_hat;
      else
        xh = t.add(t.cem_linear(lk, op_), t.constant(offset_));
      outs.push_back(xh);
      penalties.push_back(t.sum(t.abs(t.sub(xh, t.clip(xh)))));
    }
    // Each output sits in n-1 pair terms, so a weight of n on the excess
    // outside [0,1] keeps the objective bounded below.
    return t.add(diversity_objective(t, outs, x_cur, {o.anchored, o.mu}), t.scale(t.add_n(penalties), n_out));
  };

  TapeObjective f(joint, build);
  DescentOptions opts;
  opts.steps = o.steps;
  opts.step = 1e-3;
  const DescentResult r = descend(f, joint, opts);

  std::vector<Alternative> alts;
  for (int k = 0; k < o.n; ++k) {
    Image lk = select_channels(r.latent, k * L, L);
    Image xh = render(lk);
    alts.push_back({std::move(lk), std::move(xh)});
  }
  std::lock_guard lock(mu_);
  alternatives_ = alts;
  return alts;
}

Image Session::alternative_image(std::size_t i) const {
  std::lock_guard lock(mu_);
  if (i >= alternatives_.size()) throw Error(ErrorCode::NotFound, "no alternative " + std::to_string(i));
  return alternatives_[i].x_hat;
}

void Session::adopt_alternative(std::size_t i) {
  BusyGuard busy(busy_);
  std::lock_guard lock(mu_);
  if (i >= alternatives_.size()) throw Error(ErrorCode::NotFound, "no alternative " + std::to_string(i));
  push_history_locked();
  latent_ = alternatives_[i].latent;
  x_hat_ = alternatives_[i].x_hat;
}

void Session::export_to(const std::string& dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, dir + ": " + ec.message());
  const fs::path d(dir);
  Image latent, xh;
  {
    std::lock_guard lock(mu_);
    latent = latent_;
    xh = x_hat_;
  }
  save_png(y_, (d / "y.png").string());
  save_raster(y_, (d / "y.bin").string());
  save_kernel(kernel(), (d / "kernel.json").string());
  save_raster(latent, (d / "latent.bin").string());
  save_png(xh, (d / "xhat.png").string());
  json s = {{"format", "cemx-session"},
            {"version", 1},
            {"factor", cfg_.factor},
            {"boundary", boundary_name(cfg_.boundary)},
            {"mode", mode_name(cfg_.mode)},
            {"tau", cfg_.tau},
            {"history_limit", cfg_.history_limit},
            {"pad_lr", cfg_.pad_lr}};
  detail::write_file((d / "session.json").string(), s.dump(2) + "\n");
  if (cfg_.generator) save_generator(*cfg_.generator, (d / "generator.json").string());
}

std::unique_ptr<Session> Session::load(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  SessionConfig cfg;
  try {
    const json s = json::parse(detail::read_file((d / "session.json").string()));
    if (s.value("format", std::string()) != "cemx-session") throw Error(ErrorCode::IoError, dir + ": not a session");
    cfg.factor = s.at("factor").get<int>();
    cfg.boundary = parse_boundary(s.value("boundary", std::string("periodic")));
    cfg.mode = parse_mode(s.value("mode", std::string("direct")));
    cfg.tau = s.value("tau", cfg.tau);
    cfg.history_limit = s.value("history_limit", cfg.history_limit);
    cfg.pad_lr = s.value("pad_lr", cfg.pad_lr);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, dir + "/session.json: " + e.what());
  }
  if (cfg.mode == SessionMode::Generator) cfg.generator = load_generator((d / "generator.json").string());
  // y.bin keeps the exact samples; y.png alone is quantized.
  Image y = fs::exists(d / "y.bin") ? load_raster((d / "y.bin").string()) : load_image((d / "y.png").string());
  const Kernel h = load_kernel((d / "kernel.json").string(), false);
  auto session = std::make_unique<Session>(std::move(y), h, std::move(cfg));
  if (fs::exists(d / "latent.bin")) {
    Image latent = load_raster((d / "latent.bin").string());
    if (!latent.same_shape(session->latent_)) throw Error(ErrorCode::InvalidDims, dir + ": latent shape mismatch");
    session->latent_ = std::move(latent);
    session->refresh_locked();
  }
  return session;
}

double rmse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::InvalidDims, "rmse: images differ in shape");
  if (a.empty()) throw Error(ErrorCode::InvalidDims, "rmse: empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = 255.0 * (a[i] - b[i]);
    s += d * d;
  }
  return std::sqrt(s / double(a.size()));
}

double psnr(const Image& a, const Image& b) {
  const double r = rmse(a, b);
  if (r == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(255.0 / r);
}

DiversityReport diversity_metric(const std::vector<Image>& outputs, const CemOperator& op, const Image* reference) {
  if (outputs.size() < 2) throw Error(ErrorCode::InvalidParam, "diversity needs at least two outputs");
  for (const Image& o : outputs)
    if (!o.same_shape(outputs[0])) throw Error(ErrorCode::InvalidDims, "diversity: outputs differ in shape");
  std::vector<Image> proj;
  for (const Image& o : outputs) proj.push_back(project_nullspace(op, o));
  const std::size_t n = proj[0].size();
  const double k = double(proj.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Offsets from the first output keep identical inputs at exactly zero.
    double m = 0.0;
    for (const Image& p : proj) m += p[i] - proj[0][i];
    m /= k;
    double v = 0.0;
    for (const Image& p : proj) {
      const double d = p[i] - proj[0][i] - m;
      v += d * d;
    }
    acc += std::sqrt(v / k);
  }
  DiversityReport rep;
  rep.sigma = 255.0 * acc / double(n);
  if (reference) {
    for (const Image& o : outputs) rep.rmse.push_back(rmse(o, *reference));
    double m = 0.0;
    for (double r : rep.rmse) m += r;
    m /= k;
    double v = 0.0;
    for (double r : rep.rmse) v += (r - m) * (r - m);
    rep.rmse_mean = m;
    rep.rmse_std = std::sqrt(v / k);
  }
  return rep;
}

}  // namespace cemx
