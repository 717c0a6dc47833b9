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

#include "cemx/image.hpp"
#include "cemx/kernel.hpp"

namespace cemx {

// Consistency enforcing projection onto {x : H x = y}, where H blurs with h
// and keeps every factor-th sample. Immutable once built.
//
// Periodic mode works on the HR torus and is exact. Replicate mode
// replicate-pads by pad_lr LR pixels (pad_lr * factor HR pixels), projects
// on the padded torus and crops back; consistency then holds away from the
// border.
class CemOperator {
 public:
  static constexpr int kDefaultPadLr = 10;

  CemOperator(const Kernel& h, int factor, int hr_width, int hr_height,
              BoundaryMode boundary = BoundaryMode::Periodic, int pad_lr = kDefaultPadLr,
              double eps = 1e-10);

  const Kernel& kernel() const noexcept { return h_; }
  const Kernel& mirrored() const noexcept { return h_mirror_; }
  const InvFilter& inverse() const noexcept { return k_; }
  int factor() const noexcept { return factor_; }
  int hr_width() const noexcept { return hr_width_; }
  int hr_height() const noexcept { return hr_height_; }
  int lr_width() const noexcept { return hr_width_ / factor_; }
  int lr_height() const noexcept { return hr_height_ / factor_; }
  BoundaryMode boundary() const noexcept { return boundary_; }
  int pad_lr() const noexcept { return pad_lr_; }
  int crop_hr() const noexcept { return pad_lr_ * factor_; }
  int floored_bins() const noexcept { return k_.floored_bins; }
  double eps() const noexcept { return eps_; }

  // Building blocks on the operator's own torus (padded in Replicate mode).
  Image grid_degrade(const Image& x) const;    // (h * x) down
  Image grid_backproject(const Image& v) const;  // h~ * (k * v) up  ==  H^T (H H^T)^-1 v
  Image grid_project_nullspace(const Image& u) const;

 private:
  Kernel h_;
  Kernel h_mirror_;
  InvFilter k_;
  int factor_;
  int hr_width_;
  int hr_height_;
  BoundaryMode boundary_;
  int pad_lr_;
  double eps_;
};

using CemHandle = std::shared_ptr<const CemOperator>;

CemOperator build_cem(const Kernel& h, int factor, int hr_width, int hr_height,
                      BoundaryMode boundary = BoundaryMode::Periodic);
CemOperator swap_kernel(const CemOperator& op, const Kernel& h_new);

Image degrade(const CemOperator& op, const Image& x);
Image cem_apply(const CemOperator& op, const Image& x_inc, const Image& y);
// Replicate-pads, projects, then crops crop_hr() HR pixels from every side of
// the hr-sized result: output is (hr - 2*crop_hr) per axis.
Image cem_apply_padded(const CemOperator& op, const Image& x_inc, const Image& y);

Image project_nullspace(const CemOperator& op, const Image& u);
Image project_perp(const CemOperator& op, const Image& u);
// The x_inc-linear part of cem_apply (P_N in Periodic mode) and its adjoint.
Image cem_linear(const CemOperator& op, const Image& u);
Image cem_adjoint(const CemOperator& op, const Image& u);
// The y-dependent part of cem_apply: cem_apply(op, 0, y).
Image cem_offset(const CemOperator& op, const Image& y);

struct Residual {
  double linf = 0.0;
  double rms = 0.0;
  long samples = 0;
};

// ||degrade(x) - y|| over all LR samples (Periodic) or over the LR samples
// whose blur window lies inside the image (Replicate).
Residual consistency_residual(const CemOperator& op, const Image& x_hat, const Image& y);
// Residual of a same-scale pair (x_hat dims = factor * y dims) restricted to
// samples whose window needs no boundary handling.
Residual interior_residual(const Kernel& h, int factor, const Image& x_hat, const Image& y);

}  // namespace cemx
