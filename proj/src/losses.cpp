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

#include "cemx/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "cemx/error.hpp"

namespace cemx {

namespace {

const Kernel& dx_kernel() {
  static const Kernel k(1, 3, {0.5, 0.0, -0.5}, "dx");
  return k;
}
const Kernel& dy_kernel() {
  static const Kernel k(3, 1, {0.5, 0.0, -0.5}, "dy");
  return k;
}

void check_region(const Image& x, const RegionMask& region) {
  if (region.channels() != 1 || region.width() != x.width() || region.height() != x.height())
    throw Error(ErrorCode::InvalidDims, "region mask must be single-channel with the image's dims");
  if (sum(region) <= 0.0) throw Error(ErrorCode::EmptyRegion, "structure tensor over an empty region");
}

double mask_dot(const Image& a, const Image& b, const Image& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i] * m[i];
  return s;
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {range, structure, map, gp})
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidParam, "loss weights must be finite and >= 0");
}

double range_loss(const Image& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x.data()) s += v < 0.0 ? -v : (v > 1.0 ? v - 1.0 : 0.0);
  return s / double(x.size());
}

ad::NodeId range_loss(ad::Tape& t, ad::NodeId x) { return t.mean(t.abs(t.sub(x, t.clip(x)))); }

ad::NodeId luma(ad::Tape& t, ad::NodeId x) {
  const int c = t.value(x).channels();
  if (c == 1) return x;
  if (c != 3) throw Error(ErrorCode::InvalidDims, "luma needs 1 or 3 channels");
  const ad::NodeId w = t.constant(Image(1, 1, 3, std::vector<double>{0.299, 0.587, 0.114}));
  return t.conv_layer(x, w, t.constant(Image(1, 1, 1, 0.0)));
}

Image grad_x(const Image& plane) { return conv2d(plane, dx_kernel(), BoundaryMode::Replicate); }
Image grad_y(const Image& plane) { return conv2d(plane, dy_kernel(), BoundaryMode::Replicate); }

StructureTensor compute_St(const Image& x, const RegionMask& region) {
  check_region(x, region);
  const Image l = to_luma(x);
  const Image gx = grad_x(l), gy = grad_y(l);
  return {mask_dot(gx, gx, region), mask_dot(gx, gy, region), mask_dot(gy, gy, region)};
}

StructureTensor compute_St(const Image& x) { return compute_St(x, Image(x.width(), x.height(), 1, 1.0)); }

TensorNodes compute_St(ad::Tape& t, ad::NodeId x, const RegionMask& region) {
  check_region(t.value(x), region);
  const ad::NodeId l = luma(t, x);
  const ad::NodeId gx = t.conv2d(l, dx_kernel(), BoundaryMode::Replicate);
  const ad::NodeId gy = t.conv2d(l, dy_kernel(), BoundaryMode::Replicate);
  const ad::NodeId m = t.constant(region);
  return {t.sum(t.mul(t.square(gx), m)), t.sum(t.mul(t.mul(gx, gy), m)), t.sum(t.mul(t.square(gy), m))};
}

StructureTensor compose_Sd(double l1, double l2, double theta, ComposeMode mode) {
  if (!(l1 >= 0.0 && l1 <= 1.0) || !(l2 >= 0.0 && l2 <= 1.0) || !(theta >= 0.0 && theta <= 2.0 * std::numbers::pi))
    throw Error(ErrorCode::InvalidParam, "compose_Sd needs lambda1, lambda2 in [0,1] and theta in [0, 2pi]");
  const double c = std::cos(theta), s = std::sin(theta);
  const double off = mode == ComposeMode::Product ? l1 * l2 * s * c : (l1 - l2) * s * c;
  return {l1 * c * c + l2 * s * s, off, l1 * s * s + l2 * c * c};
}

double normalization_divisor(const Image& x) {
  const Image l = to_luma(x);
  const Image gx = grad_x(l), gy = grad_y(l);
  double s = 0.0;
  for (std::size_t i = 0; i < gx.size(); ++i) s += std::fabs(gx[i] * gy[i]);
  return std::max(s, 1e-12);
}

StructureTensor normalize_St(const StructureTensor& s, const Image& x) {
  const double d = normalization_divisor(x);
  return {s.s11 / d, s.s12 / d, s.s22 / d};
}

StructureTensor adjust_Sd(const StructureTensor& sd, const PercentileCalibration& cal) {
  auto f = [](double v, const PercentileRange& r) { return (r.p95 - r.p5) * v / 2.0 + (r.p95 + r.p5) / 2.0; };
  return {f(sd.s11, cal.s11), f(sd.s12, cal.s12), f(sd.s22, cal.s22)};
}

double struct_loss(const Image& x_hat, const Image& x, double l1, double l2, double theta,
                   const PercentileCalibration& cal, ComposeMode mode) {
  const StructureTensor s = normalize_St(compute_St(x_hat), x);
  const StructureTensor d = adjust_Sd(compose_Sd(l1, l2, theta, mode), cal);
  return std::fabs(s.s11 - d.s11) + std::fabs(s.s12 - d.s12) + std::fabs(s.s22 - d.s22);
}

ad::NodeId struct_loss(ad::Tape& t, ad::NodeId x_hat, const Image& x, double l1, double l2, double theta,
                       const PercentileCalibration& cal, ComposeMode mode) {
  const Image& v = t.value(x_hat);
  const TensorNodes s = compute_St(t, x_hat, Image(v.width(), v.height(), 1, 1.0));
  const double inv = 1.0 / normalization_divisor(x);
  const StructureTensor d = adjust_Sd(compose_Sd(l1, l2, theta, mode), cal);
  auto term = [&](ad::NodeId e, double target) {
    return t.abs(t.sub(t.scale(e, inv), t.constant(Image::scalar(target))));
  };
  return t.add_n({term(s.s11, d.s11), term(s.s12, d.s12), term(s.s22, d.s22)});
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::CalibrationError, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = p * double(values.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

PercentileCalibration calibrate_percentiles(const std::vector<StructureTensor>& normalized) {
  if (normalized.size() < 2) throw Error(ErrorCode::CalibrationError, "calibration needs at least 2 images");
  std::vector<double> a, b, c;
  for (const auto& s : normalized) {
    a.push_back(s.s11);
    b.push_back(s.s12);
    c.push_back(s.s22);
  }
  auto range = [](const std::vector<double>& v) { return PercentileRange{percentile(v, 0.05), percentile(v, 0.95)}; };
  return {range(a), range(b), range(c)};
}

PercentileCalibration calibrate_percentiles(const std::vector<Image>& images) {
  if (images.size() < 2) throw Error(ErrorCode::CalibrationError, "calibration needs at least 2 images");
  std::vector<StructureTensor> tensors;
  for (const auto& img : images) tensors.push_back(normalize_St(compute_St(img), img));
  return calibrate_percentiles(tensors);
}

std::string calibration_to_json(const PercentileCalibration& cal) {
  nlohmann::json doc;
  doc["s11"] = {cal.s11.p5, cal.s11.p95};
  doc["s12"] = {cal.s12.p5, cal.s12.p95};
  doc["s22"] = {cal.s22.p5, cal.s22.p95};
  return doc.dump();
}

PercentileCalibration calibration_from_json(const std::string& text) {
  PercentileCalibration cal;
  try {
    const auto doc = nlohmann::json::parse(text);
    auto read = [&](const char* key) {
      const auto v = doc.at(key).get<std::vector<double>>();
      if (v.size() != 2 || !(v[0] <= v[1])) throw Error(ErrorCode::CalibrationError, std::string(key) + ": need [p5, p95] with p5 <= p95");
      return PercentileRange{v[0], v[1]};
    };
    cal.s11 = read("s11");
    cal.s12 = read("s12");
    cal.s22 = read("s22");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CalibrationError, std::string("calibration file: ") + e.what());
  }
  return cal;
}

DescentOptions map_descent_options() {
  DescentOptions o;
  o.polyak = true;
  o.polyak_scale = 1.5;
  o.lower_bound = 0.0;
  return o;
}

MapResult map_loss(const GeneratorParams& params, const Image& y, const Image& x, const CemHandle& op,
                   const Image& z0, int iters, DescentOptions opts) {
  const Image target = x;
  TapeObjective f(z0, [&](ad::Tape& t, ad::NodeId z) {
    const auto n = generate_on_tape(params, y, z, op, t);
    return t.mean(t.abs(t.sub(n.x_hat, t.constant(target))));
  });
  opts.steps = iters;
  const DescentResult d = descend(f, z0, opts);
  MapResult r;
  r.z = d.latent;
  r.values.push_back(d.initial);
  r.values.insert(r.values.end(), d.trace.begin(), d.trace.end());
  r.value = d.final_value();
  return r;
}

MapResult map_loss_direct(const Image& y, const Image& x, const CemHandle& op, const Image& n0, int iters,
                          DescentOptions opts) {
  const Image offset = cem_offset(*op, y);
  TapeObjective f(n0, [&](ad::Tape& t, ad::NodeId n) {
    const ad::NodeId xh = t.add(t.cem_linear(n, op), t.constant(offset));
    return t.mean(t.abs(t.sub(xh, t.constant(x))));
  });
  opts.steps = iters;
  const DescentResult d = descend(f, n0, opts);
  MapResult r;
  r.z = d.latent;
  r.values.push_back(d.initial);
  r.values.insert(r.values.end(), d.trace.begin(), d.trace.end());
  r.value = d.final_value();
  return r;
}

CriticLosses critic_losses(const LinearCritic& critic, const Image& real, const Image& fake, double lambda_gp) {
  return critic_losses(critic, std::vector<Image>{real}, std::vector<Image>{fake}, lambda_gp);
}

CriticLosses critic_losses(const LinearCritic& critic, const std::vector<Image>& real,
                           const std::vector<Image>& fake, double lambda_gp) {
  if (real.empty() || fake.empty()) throw Error(ErrorCode::InvalidParam, "critic batch is empty");
  double dr = 0.0, df = 0.0;
  for (const auto& r : real) dr += critic(r);
  for (const auto& f : fake) df += critic(f);
  dr /= double(real.size());
  df /= double(fake.size());
  const double n = std::sqrt(norm2(critic.w));
  CriticLosses out;
  out.penalty = lambda_gp * (n - 1.0) * (n - 1.0);
  out.loss_d = df - dr + out.penalty;
  out.loss_g = -df;
  return out;
}

bool credibility_gate(const std::deque<bool>& history) {
  if (history.size() < kCredibilityWindow) return false;
  return std::all_of(history.end() - kCredibilityWindow, history.end(), [](bool b) { return b; });
}

bool credibility_gate(const std::vector<bool>& history) {
  return credibility_gate(std::deque<bool>(history.begin(), history.end()));
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  return c.adv + w.range * c.range + w.structure * c.structure + w.map * c.map;
}

}  // namespace cemx
