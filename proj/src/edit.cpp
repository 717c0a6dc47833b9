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

#include "cemx/edit.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "cemx/error.hpp"
#include "cemx/region.hpp"

namespace cemx {

using ad::NodeId;
using ad::Tape;

namespace {

constexpr double kVarEps = 1e-8;

void check_mask(const Image& img, const RegionMask& mask, const char* what) {
  if (mask.channels() != 1 || mask.width() != img.width() || mask.height() != img.height())
    throw Error(ErrorCode::InvalidDims, std::string(what) + ": mask must be single-channel with the image's dims");
}

Image channel_mask(const RegionMask& mask, int channels) {
  Image m(mask.width(), mask.height(), channels);
  for (int c = 0; c < channels; ++c) std::copy(mask.data().begin(), mask.data().end(), m.plane(c).begin());
  return m;
}

NodeId masked_l1(Tape& t, NodeId x, const Image& target, const RegionMask& mask) {
  const int c = t.value(x).channels();
  return t.sum(t.abs(t.mul(t.sub(x, t.constant(target)), t.constant(channel_mask(mask, c)))));
}

NodeId sum_terms(Tape& t, const std::vector<NodeId>& terms) {
  if (terms.empty()) return t.constant(Image::scalar(0.0));
  return terms.size() == 1 ? terms[0] : t.add_n(terms);
}

// Per-channel mean-removed copy of one patch, recorded on the tape.
NodeId centered_patch(Tape& t, NodeId x, Rect r) {
  const int channels = t.value(x).channels();
  NodeId out = 0;
  for (int c = 0; c < channels; ++c) {
    const NodeId s = t.slice(x, ad::SliceSpec{c, 1, r});
    const NodeId cs = t.sub(s, t.broadcast(t.mean(s), ad::Shape{r.w, r.h, 1}));
    out = c == 0 ? cs : t.concat(out, cs);
  }
  return out;
}

Image centered(const Image& p) {
  Image out = p;
  for (int c = 0; c < p.channels(); ++c) {
    auto pl = out.plane(c);
    double m = 0.0;
    for (double v : pl) m += v;
    m /= double(pl.size());
    for (auto& v : pl) v -= m;
  }
  return out;
}

double mean_square(const Image& a) { return norm2(a) / double(a.size()); }

// One shifted pair window: samples q in `a` are compared with q + (sx, sy).
struct PairWindow {
  Rect a, b;
  Image mask;  // 1 where both ends lie in the region
  bool any = false;
};

PairWindow pair_window(const RegionMask& region, int sx, int sy) {
  const int W = region.width(), H = region.height();
  PairWindow w;
  const int x0 = std::max(0, -sx), y0 = std::max(0, -sy);
  const int x1 = std::min(W, W - sx), y1 = std::min(H, H - sy);
  if (x1 <= x0 || y1 <= y0) return w;
  w.a = {x0, y0, x1 - x0, y1 - y0};
  w.b = {x0 + sx, y0 + sy, x1 - x0, y1 - y0};
  w.mask = Image(w.a.w, w.a.h, 1);
  for (int y = 0; y < w.a.h; ++y)
    for (int x = 0; x < w.a.w; ++x) {
      const bool in = region.at(0, y0 + y, x0 + x) > 0.0 && region.at(0, y0 + sy + y, x0 + sx + x) > 0.0;
      w.mask.at(0, y, x) = in ? 1.0 : 0.0;
      w.any = w.any || in;
    }
  return w;
}

NodeId pair_l1(Tape& t, NodeId x, const PairWindow& w) {
  const int c = t.value(x).channels();
  const NodeId d = t.sub(t.slice(x, w.a), t.slice(x, w.b));
  return t.sum(t.abs(t.mul(d, t.constant(channel_mask(w.mask, c)))));
}

}  // namespace

std::vector<Rect> region_patches(const RegionMask& region, PatchGrid grid) {
  if (grid.row_stride < 1 || grid.col_stride < 1) throw Error(ErrorCode::InvalidParam, "patch strides must be >= 1");
  const Rect b = region_bounds(region);
  std::vector<Rect> out;
  for (int oy = b.y; oy + kPatchSize <= b.y + b.h; oy += grid.row_stride)
    for (int ox = b.x; ox + kPatchSize <= b.x + b.w; ox += grid.col_stride) {
      bool inside = true;
      for (int y = oy; y < oy + kPatchSize && inside; ++y)
        for (int x = ox; x < ox + kPatchSize; ++x)
          if (!(region.at(0, y, x) > 0.0)) {
            inside = false;
            break;
          }
      if (inside) out.push_back({ox, oy, kPatchSize, kPatchSize});
    }
  return out;
}

NodeId variance_objective(Tape& t, NodeId x_hat, const Image& x0, const RegionMask& region, double delta,
                          PatchGrid grid) {
  const Image& xv = t.value(x_hat);
  check_mask(xv, region, "variance");
  if (!x0.same_shape(xv)) throw Error(ErrorCode::InvalidDims, "variance: start image differs in shape");
  const auto patches = region_patches(region, grid);
  if (patches.empty()) throw Error(ErrorCode::EmptyRegion, "variance: region holds no full 6x6 patch");
  std::vector<NodeId> terms;
  for (const Rect& r : patches)
    for (int c = 0; c < xv.channels(); ++c) {
      const double var0 = mean_square(centered(crop(select_channels(x0, c, 1), r)));
      const NodeId s = t.slice(x_hat, ad::SliceSpec{c, 1, r});
      const NodeId var = t.mean(t.square(t.sub(s, t.broadcast(t.mean(s), ad::Shape{r.w, r.h, 1}))));
      terms.push_back(t.square(t.sub(var, t.constant(Image::scalar(var0 + delta)))));
    }
  return sum_terms(t, terms);
}

NodeId magnitude_objective(Tape& t, NodeId x_hat, const Image& x0, const RegionMask& region, double factor,
                           PatchGrid grid) {
  const Image& xv = t.value(x_hat);
  check_mask(xv, region, "magnitude");
  if (!x0.same_shape(xv)) throw Error(ErrorCode::InvalidDims, "magnitude: start image differs in shape");
  const auto patches = region_patches(region, grid);
  if (patches.empty()) throw Error(ErrorCode::EmptyRegion, "magnitude: region holds no full 6x6 patch");
  std::vector<NodeId> terms;
  for (const Rect& r : patches) {
    const Image target = factor * centered(crop(x0, r));
    terms.push_back(t.sum(t.square(t.sub(centered_patch(t, x_hat, r), t.constant(target)))));
  }
  return sum_terms(t, terms);
}

NodeId scribble_objective(Tape& t, NodeId x_hat, const Scribble& s) {
  if (s.kind != ScribbleKind::Color) throw Error(ErrorCode::InvalidParam, "scribble objective needs a color scribble");
  const Image& xv = t.value(x_hat);
  check_mask(xv, s.mask, "scribble");
  if (!s.target.same_shape(xv)) throw Error(ErrorCode::InvalidDims, "scribble: target colors differ in shape");
  if (region_empty(s.mask)) throw Error(ErrorCode::EmptyRegion, "scribble: empty mask");
  return masked_l1(t, x_hat, s.target, s.mask);
}

NodeId brightness_objective(Tape& t, NodeId x_hat, const Image& x0, const Scribble& s, double factor) {
  if (s.kind != ScribbleKind::Brighten && s.kind != ScribbleKind::Darken)
    throw Error(ErrorCode::InvalidParam, "brightness objective needs a brighten or darken scribble");
  if (!(factor > 0.0) || !std::isfinite(factor)) throw Error(ErrorCode::InvalidParam, "brightness factor must be > 0");
  const Image& xv = t.value(x_hat);
  check_mask(xv, s.mask, "brightness");
  if (!x0.same_shape(xv)) throw Error(ErrorCode::InvalidDims, "brightness: start image differs in shape");
  if (region_empty(s.mask)) throw Error(ErrorCode::EmptyRegion, "brightness: empty mask");
  return masked_l1(t, x_hat, clip01(factor * x0), s.mask);
}

NodeId local_tv_objective(Tape& t, NodeId x_hat, const Scribble& s) {
  if (s.kind != ScribbleKind::TvMin) throw Error(ErrorCode::InvalidParam, "local TV objective needs a tv_min scribble");
  check_mask(t.value(x_hat), s.mask, "local TV");
  if (region_empty(s.mask)) throw Error(ErrorCode::EmptyRegion, "local TV: empty mask");
  std::vector<NodeId> terms;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const PairWindow w = pair_window(s.mask, dx, dy);
      if (w.any) terms.push_back(pair_l1(t, x_hat, w));
    }
  return sum_terms(t, terms);
}

Image imprint_baseline(const CemOperator& op, const Image& y, const Image& x_hat, const Image& content,
                       const ImprintPlacement& where) {
  const Rect r = where.target();
  if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > x_hat.width() || r.y + r.h > x_hat.height())
    throw Error(ErrorCode::InvalidParam, "imprint rectangle lies outside the image");
  if (content.channels() != x_hat.channels()) throw Error(ErrorCode::InvalidDims, "imprint content channel count differs");
  const Image placed = (content.width() == r.w && content.height() == r.h) ? content : resize_bicubic(content, r.w, r.h);
  Image pasted = x_hat;
  for (int c = 0; c < pasted.channels(); ++c)
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x) pasted.at(c, r.y + y, r.x + x) = placed.at(c, y, x);
  return cem_apply(op, pasted, y);
}

NodeId imprint_objective(Tape& t, NodeId x_hat, const Image& baseline, Rect rect) {
  const Image& xv = t.value(x_hat);
  if (!baseline.same_shape(xv)) throw Error(ErrorCode::InvalidDims, "imprint: baseline differs in shape");
  if (rect.w <= 0 || rect.h <= 0 || rect.x < 0 || rect.y < 0 || rect.x + rect.w > xv.width() ||
      rect.y + rect.h > xv.height())
    throw Error(ErrorCode::InvalidParam, "imprint rectangle lies outside the image");
  return masked_l1(t, x_hat, baseline, rect_region(xv.width(), xv.height(), rect));
}

NodeId patch_collection_objective(Tape& t, NodeId x_hat, const Image& x0, const RegionMask& target_region,
                                  const Image& source_image, const RegionMask& source_region, PatchVariant variant,
                                  PatchGrid target_grid, PatchGrid source_grid) {
  const Image& xv = t.value(x_hat);
  check_mask(xv, target_region, "patch collection target");
  check_mask(source_image, source_region, "patch collection source");
  if (source_image.channels() != xv.channels()) throw Error(ErrorCode::InvalidDims, "patch collection: channel mismatch");
  if (!x0.same_shape(xv)) throw Error(ErrorCode::InvalidDims, "patch collection: start image differs in shape");
  const auto sources = region_patches(source_region, source_grid);
  const auto targets = region_patches(target_region, target_grid);
  if (sources.empty()) throw Error(ErrorCode::EmptyRegion, "patch collection: no source patch");
  if (targets.empty()) throw Error(ErrorCode::EmptyRegion, "patch collection: no target patch");

  const bool vp = variant == PatchVariant::VariancePreserving;
  auto bank = std::make_shared<std::vector<Image>>();
  for (const Rect& r : sources) {
    Image p = centered(crop(source_image, r));
    if (vp) p = (1.0 / std::sqrt(mean_square(p) + kVarEps)) * p;
    bank->push_back(std::move(p));
  }
  const ad::PatchBank shared = bank;
  std::vector<NodeId> terms;
  for (const Rect& r : targets) {
    const NodeId c = centered_patch(t, x_hat, r);
    if (!vp) {
      terms.push_back(t.min_sq_dist(c, shared));
      continue;
    }
    const NodeId var = t.mean(t.square(c));
    const NodeId inv = t.reciprocal(t.sqrt(t.add(var, t.constant(Image::scalar(kVarEps)))));
    const NodeId normalized = t.mul(c, t.broadcast(inv, ad::Shape{r.w, r.h, xv.channels()}));
    const double var0 = mean_square(centered(crop(x0, r)));
    terms.push_back(t.min_sq_dist(normalized, shared));
    terms.push_back(t.square(t.sub(var, t.constant(Image::scalar(var0)))));
  }
  return sum_terms(t, terms);
}

namespace {

void check_direction(Direction d) {
  if (d.dx < -1 || d.dx > 1 || d.dy < -1 || d.dy > 1 || (d.dx == 0 && d.dy == 0))
    throw Error(ErrorCode::InvalidParam, "directions must be unit steps with components in {-1,0,1}");
}

}  // namespace

NodeId periodicity_objective(Tape& t, NodeId x_hat, const RegionMask& region, const std::vector<Direction>& directions,
                             const std::vector<int>& periods) {
  check_mask(t.value(x_hat), region, "periodicity");
  if (directions.empty() || directions.size() > 2 || periods.size() != directions.size())
    throw Error(ErrorCode::InvalidParam, "periodicity needs one or two directions, each with a period");
  std::vector<NodeId> terms;
  for (std::size_t k = 0; k < directions.size(); ++k) {
    check_direction(directions[k]);
    if (periods[k] < 1) throw Error(ErrorCode::InvalidParam, "periods must be >= 1");
    const PairWindow w = pair_window(region, periods[k] * directions[k].dx, periods[k] * directions[k].dy);
    if (!w.any) throw Error(ErrorCode::InvalidParam, "region does not overlap its translate by one period");
    terms.push_back(pair_l1(t, x_hat, w));
  }
  return sum_terms(t, terms);
}

int estimate_period(const Image& x_hat, const RegionMask& region, Direction d) {
  check_direction(d);
  check_mask(x_hat, region, "estimate_period");
  const Rect b = region_bounds(region);
  if (b.w == 0) throw Error(ErrorCode::EstimationError, "empty region");
  const int extent = d.dx == 0 ? b.h : (d.dy == 0 ? b.w : std::min(b.w, b.h));
  const Image l = to_luma(x_hat);

  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < l.size(); ++i)
    if (region[i] > 0.0) {
      lo = std::min(lo, l[i]);
      hi = std::max(hi, l[i]);
    }
  if (!(hi > lo)) throw Error(ErrorCode::EstimationError, "region has zero variance");

  int best_lag = 0;
  double best = -2.0;
  for (int lag = 2; lag <= extent / 2; ++lag) {
    const int sx = lag * d.dx, sy = lag * d.dy;
    double sa = 0, sb = 0, n = 0;
    std::vector<std::pair<double, double>> pairs;
    for (int y = 0; y < l.height(); ++y)
      for (int x = 0; x < l.width(); ++x) {
        const int qx = x + sx, qy = y + sy;
        if (qx < 0 || qy < 0 || qx >= l.width() || qy >= l.height()) continue;
        if (!(region.at(0, y, x) > 0.0 && region.at(0, qy, qx) > 0.0)) continue;
        pairs.emplace_back(l.at(0, y, x), l.at(0, qy, qx));
        sa += l.at(0, y, x);
        sb += l.at(0, qy, qx);
        n += 1;
      }
    if (n < 2) continue;
    const double ma = sa / n, mb = sb / n;
    double cab = 0, caa = 0, cbb = 0;
    for (auto [a, bb] : pairs) {
      cab += (a - ma) * (bb - mb);
      caa += (a - ma) * (a - ma);
      cbb += (bb - mb) * (bb - mb);
    }
    if (caa <= 0 || cbb <= 0) continue;
    const double r = cab / std::sqrt(caa * cbb);
    if (r > best + 1e-12) {
      best = r;
      best_lag = lag;
    }
  }
  if (best_lag == 0) throw Error(ErrorCode::EstimationError, "no usable lag: region too small along the direction");
  return best_lag;
}

NodeId diversity_objective(Tape& t, const std::vector<NodeId>& outputs, const Image& x_cur, DiversityOptions opts) {
  if (outputs.size() < 2) throw Error(ErrorCode::InvalidParam, "diversity needs at least two outputs");
  std::vector<NodeId> terms;
  for (std::size_t i = 0; i < outputs.size(); ++i)
    for (std::size_t j = i + 1; j < outputs.size(); ++j)
      terms.push_back(t.scale(t.sum(t.abs(t.sub(outputs[i], outputs[j]))), -1.0));
  if (opts.anchored) {
    if (!(opts.mu >= 0.0)) throw Error(ErrorCode::InvalidParam, "anchor weight must be >= 0");
    const NodeId cur = t.constant(x_cur);
    for (NodeId o : outputs) terms.push_back(t.scale(t.sum(t.abs(t.sub(o, cur))), opts.mu));
  }
  return t.add_n(terms);
}

NodeId total_variation(Tape& t, NodeId x) {
  const Image& v = t.value(x);
  const int W = v.width(), H = v.height();
  std::vector<NodeId> terms;
  if (W > 1) terms.push_back(t.sum(t.abs(t.sub(t.slice(x, Rect{1, 0, W - 1, H}), t.slice(x, Rect{0, 0, W - 1, H})))));
  if (H > 1) terms.push_back(t.sum(t.abs(t.sub(t.slice(x, Rect{0, 1, W, H - 1}), t.slice(x, Rect{0, 0, W, H - 1})))));
  return sum_terms(t, terms);
}

}  // namespace cemx
