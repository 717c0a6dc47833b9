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

#include <vector>

#include "cemx/cem.hpp"
#include "cemx/image.hpp"
#include "cemx/tape.hpp"

namespace cemx {

constexpr int kPatchSize = 6;

// Patch origins step by the strides from the top-left of the region's
// bounding box; only patches lying wholly inside the region are used.
struct PatchGrid {
  int row_stride = 1;
  int col_stride = 1;
};

std::vector<Rect> region_patches(const RegionMask& region, PatchGrid grid);

enum class ScribbleKind { Color, Brighten, Darken, TvMin };

struct Scribble {
  RegionMask mask;
  Image target;  // per-pixel colors, used by ScribbleKind::Color
  ScribbleKind kind = ScribbleKind::Color;
};

// Objectives record onto t and return a scalar node. x0 is the image at job
// start; everything derived from it is a constant of the tape.
ad::NodeId variance_objective(ad::Tape& t, ad::NodeId x_hat, const Image& x0, const RegionMask& region, double delta,
                              PatchGrid grid = {1, 1});
ad::NodeId magnitude_objective(ad::Tape& t, ad::NodeId x_hat, const Image& x0, const RegionMask& region, double factor,
                               PatchGrid grid = {4, 4});
ad::NodeId scribble_objective(ad::Tape& t, ad::NodeId x_hat, const Scribble& s);
ad::NodeId brightness_objective(ad::Tape& t, ad::NodeId x_hat, const Image& x0, const Scribble& s, double factor);
ad::NodeId local_tv_objective(ad::Tape& t, ad::NodeId x_hat, const Scribble& s);

struct ImprintPlacement {
  Rect rect;            // where the content came from / was selected
  int dx = 0, dy = 0;   // arrow-button offset
  int dw = 0, dh = 0;   // arrow-button resize
  Rect target() const { return {rect.x + dx, rect.y + dy, rect.w + dw, rect.h + dh}; }
};

// Pastes content (bicubic-resized to the target rect) into a copy of x_hat
// and projects the result back onto the consistent set.
Image imprint_baseline(const CemOperator& op, const Image& y, const Image& x_hat, const Image& content,
                       const ImprintPlacement& where);
ad::NodeId imprint_objective(ad::Tape& t, ad::NodeId x_hat, const Image& baseline, Rect rect);

enum class PatchVariant { Plain, VariancePreserving };

// Source patches are cut from source_image inside source_region (stride 2);
// target patches from x_hat inside target_region (stride 4).
ad::NodeId patch_collection_objective(ad::Tape& t, ad::NodeId x_hat, const Image& x0, const RegionMask& target_region,
                                      const Image& source_image, const RegionMask& source_region,
                                      PatchVariant variant = PatchVariant::Plain, PatchGrid target_grid = {4, 4},
                                      PatchGrid source_grid = {2, 2});

struct Direction {
  int dx = 1;
  int dy = 0;
};

// Sum over directions of |x_hat(q) - x_hat(q + p*d)| over pairs with both
// ends in the region.
ad::NodeId periodicity_objective(ad::Tape& t, ad::NodeId x_hat, const RegionMask& region,
                                 const std::vector<Direction>& directions, const std::vector<int>& periods);
int estimate_period(const Image& x_hat, const RegionMask& region, Direction d);

struct DiversityOptions {
  bool anchored = false;
  double mu = 0.1;
};
ad::NodeId diversity_objective(ad::Tape& t, const std::vector<ad::NodeId>& outputs, const Image& x_cur,
                               DiversityOptions opts = {});

// Total variation: sum of |forward differences| along both axes.
ad::NodeId total_variation(ad::Tape& t, ad::NodeId x);

}  // namespace cemx
