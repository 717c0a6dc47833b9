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

#include "cemx/cem.hpp"

#include <algorithm>
#include <cmath>

#include "cemx/error.hpp"

namespace cemx {

namespace {

void require_dims(const Image& img, int w, int h, const char* what) {
  if (img.width() != w || img.height() != h)
    throw Error(ErrorCode::InvalidDims, std::string(what) + " has " + std::to_string(img.width()) + "x" +
                                            std::to_string(img.height()) + ", expected " +
                                            std::to_string(w) + "x" + std::to_string(h));
}

int grid_pad(BoundaryMode mode, int pad_lr) { return mode == BoundaryMode::Replicate ? pad_lr : 0; }

}  // namespace

CemOperator::CemOperator(const Kernel& h, int factor, int hr_width, int hr_height, BoundaryMode boundary,
                         int pad_lr, double eps)
    : h_(h),
      h_mirror_(mirror(h)),
      factor_(factor),
      hr_width_(hr_width),
      hr_height_(hr_height),
      boundary_(boundary),
      pad_lr_(pad_lr),
      eps_(eps) {
  if (factor < 1) throw Error(ErrorCode::InvalidParam, "scale factor must be >= 1");
  if (pad_lr < 0) throw Error(ErrorCode::InvalidParam, "negative padding");
  if (hr_width < 1 || hr_height < 1 || hr_width % factor != 0 || hr_height % factor != 0)
    throw Error(ErrorCode::InvalidDims, "HR dims " + std::to_string(hr_width) + "x" + std::to_string(hr_height) +
                                            " not divisible by scale " + std::to_string(factor));
  const int pad = grid_pad(boundary, pad_lr);
  k_ = invert_composed(h_, factor, hr_height / factor + 2 * pad, hr_width / factor + 2 * pad, eps);
}

Image CemOperator::grid_degrade(const Image& x) const {
  return downsample(conv2d(x, h_, BoundaryMode::Periodic), factor_);
}

Image CemOperator::grid_backproject(const Image& v) const {
  return conv2d(upsample(apply_inv(k_, v), factor_), h_mirror_, BoundaryMode::Periodic);
}

Image CemOperator::grid_project_nullspace(const Image& u) const {
  return u - grid_backproject(grid_degrade(u));
}

CemOperator build_cem(const Kernel& h, int factor, int hr_width, int hr_height, BoundaryMode boundary) {
  return CemOperator(h, factor, hr_width, hr_height, boundary);
}

CemOperator swap_kernel(const CemOperator& op, const Kernel& h_new) {
  return CemOperator(h_new, op.factor(), op.hr_width(), op.hr_height(), op.boundary(), op.pad_lr(), op.eps());
}

Image degrade(const CemOperator& op, const Image& x) {
  require_dims(x, op.hr_width(), op.hr_height(), "HR image");
  return downsample(conv2d(x, op.kernel(), op.boundary()), op.factor());
}

Image cem_apply(const CemOperator& op, const Image& x_inc, const Image& y) {
  require_dims(x_inc, op.hr_width(), op.hr_height(), "candidate");
  require_dims(y, op.lr_width(), op.lr_height(), "LR image");
  if (x_inc.channels() != y.channels()) throw Error(ErrorCode::InvalidDims, "candidate/LR channel mismatch");
  // x_inc - h~*[k*(h*x_inc)down]up + h~*(k*y)up, with the two back-projections fused.
  if (op.boundary() == BoundaryMode::Periodic)
    return x_inc + op.grid_backproject(y - op.grid_degrade(x_inc));
  const int pad_hr = op.crop_hr();
  const Image xp = pad_replicate(x_inc, pad_hr);
  const Image yp = pad_replicate(y, op.pad_lr());
  const Image out = xp + op.grid_backproject(yp - op.grid_degrade(xp));
  return crop(out, {pad_hr, pad_hr, op.hr_width(), op.hr_height()});
}

Image cem_apply_padded(const CemOperator& op, const Image& x_inc, const Image& y) {
  const int c = op.crop_hr();
  if (op.hr_width() <= 2 * c || op.hr_height() <= 2 * c)
    throw Error(ErrorCode::InvalidDims, "image smaller than twice the crop band");
  if (op.boundary() == BoundaryMode::Replicate) {
    return crop(cem_apply(op, x_inc, y), {c, c, op.hr_width() - 2 * c, op.hr_height() - 2 * c});
  }
  const CemOperator rep(op.kernel(), op.factor(), op.hr_width(), op.hr_height(), BoundaryMode::Replicate,
                        op.pad_lr(), op.eps());
  return crop(cem_apply(rep, x_inc, y), {c, c, op.hr_width() - 2 * c, op.hr_height() - 2 * c});
}

Image project_nullspace(const CemOperator& op, const Image& u) {
  require_dims(u, op.hr_width(), op.hr_height(), "image");
  if (op.boundary() == BoundaryMode::Periodic) return op.grid_project_nullspace(u);
  const int pad_hr = op.crop_hr();
  return crop(op.grid_project_nullspace(pad_replicate(u, pad_hr)),
              {pad_hr, pad_hr, op.hr_width(), op.hr_height()});
}

Image project_perp(const CemOperator& op, const Image& u) { return u - project_nullspace(op, u); }

Image cem_linear(const CemOperator& op, const Image& u) { return project_nullspace(op, u); }

Image cem_adjoint(const CemOperator& op, const Image& u) {
  require_dims(u, op.hr_width(), op.hr_height(), "image");
  if (op.boundary() == BoundaryMode::Periodic) return op.grid_project_nullspace(u);
  const int pad_hr = op.crop_hr();
  return pad_replicate_adjoint(op.grid_project_nullspace(embed(u, pad_hr)), pad_hr);
}

Image cem_offset(const CemOperator& op, const Image& y) {
  return cem_apply(op, Image(op.hr_width(), op.hr_height(), y.channels()), y);
}

namespace {

Residual summarize(const Image& diff) {
  Residual r;
  double ss = 0.0;
  for (double v : diff.data()) {
    r.linf = std::max(r.linf, std::abs(v));
    ss += v * v;
  }
  r.samples = long(diff.size());
  r.rms = diff.size() ? std::sqrt(ss / double(diff.size())) : 0.0;
  return r;
}

}  // namespace

Residual consistency_residual(const CemOperator& op, const Image& x_hat, const Image& y) {
  require_dims(x_hat, op.hr_width(), op.hr_height(), "HR image");
  require_dims(y, op.lr_width(), op.lr_height(), "LR image");
  if (op.boundary() == BoundaryMode::Periodic) return summarize(op.grid_degrade(x_hat) - y);
  return interior_residual(op.kernel(), op.factor(), x_hat, y);
}

Residual interior_residual(const Kernel& h, int factor, const Image& x_hat, const Image& y) {
  if (x_hat.width() != y.width() * factor || x_hat.height() != y.height() * factor ||
      x_hat.channels() != y.channels())
    throw Error(ErrorCode::InvalidDims, "HR/LR dims do not match the scale factor");
  const Image deg = downsample(conv2d(x_hat, h, BoundaryMode::Replicate), factor);
  // LR sample p reads HR rows factor*p - (R-1-cr) .. factor*p + cr.
  const int up_r = h.rows() - 1 - h.center_row(), down_r = h.center_row();
  const int up_c = h.cols() - 1 - h.center_col(), down_c = h.center_col();
  const int y0 = (up_r + factor - 1) / factor, x0 = (up_c + factor - 1) / factor;
  const int y1 = (x_hat.height() - 1 - down_r) / factor, x1 = (x_hat.width() - 1 - down_c) / factor;
  Residual r;
  double ss = 0.0;
  for (int c = 0; c < y.channels(); ++c)
    for (int py = y0; py <= y1 && py < y.height(); ++py)
      for (int px = x0; px <= x1 && px < y.width(); ++px) {
        const double d = deg.at(c, py, px) - y.at(c, py, px);
        r.linf = std::max(r.linf, std::abs(d));
        ss += d * d;
        ++r.samples;
      }
  if (r.samples == 0) throw Error(ErrorCode::InvalidDims, "no interior samples to check");
  r.rms = std::sqrt(ss / double(r.samples));
  return r;
}

}  // namespace cemx
