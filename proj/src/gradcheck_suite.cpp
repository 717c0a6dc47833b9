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

#include "cemx/gradcheck_suite.hpp"

#include <memory>
#include <random>

#include "cemx/edit.hpp"
#include "cemx/generator.hpp"
#include "cemx/losses.hpp"
#include "cemx/region.hpp"

namespace cemx {

using ad::NodeId;
using ad::Tape;

namespace {

constexpr int kSide = 12;

Image random_raster(std::mt19937_64& rng, double lo, double hi, int channels = 3) {
  std::uniform_real_distribution<double> d(lo, hi);
  Image img(kSide, kSide, channels);
  for (auto& v : img.data()) v = d(rng);
  return img;
}

// Shared inputs, kept alive by the builders that capture them.
struct Fixture {
  Image x0, x, colors, baseline, y;
  RegionMask inner, blob;
  ImprintPlacement place{{3, 3, 5, 5}, 1, 0, 1, 1};
  CemHandle op;
  GeneratorParams gen;
  PercentileCalibration cal{{0.1, 2.0}, {-0.5, 0.4}, {0.2, 1.5}};
  LinearCritic critic;
};

Scribble scribble(const RegionMask& m, const Image& target, ScribbleKind kind) {
  Scribble s;
  s.mask = m;
  s.target = target;
  s.kind = kind;
  return s;
}

}  // namespace

std::vector<GradCheckEntry> registered_objectives(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto f = std::make_shared<Fixture>();
  f->x0 = random_raster(rng, 0.0, 1.0);
  f->x = random_raster(rng, 0.0, 1.0);
  f->colors = random_raster(rng, 0.0, 1.0);
  f->inner = rect_region(kSide, kSide, {1, 2, 9, 8});
  f->blob = polygon_region(kSide, kSide, {{1, 1}, {10, 2}, {9, 10}, {2, 9}});
  f->op = std::make_shared<const CemOperator>(bicubic_kernel(2), 2, kSide, kSide);
  f->y = degrade(*f->op, f->x);
  {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Image content(4, 4, 3);
    for (auto& v : content.data()) v = d(rng);
    f->baseline = imprint_baseline(*f->op, f->y, f->x0, content, f->place);
  }
  f->gen = GeneratorParams::toy(2, 3, seed + 1);
  f->critic.w = random_raster(rng, -0.1, 0.1);
  f->critic.b = 0.2;

  const Image pixels = random_raster(rng, 0.0, 1.0);
  const Image wide = random_raster(rng, -0.4, 1.4);
  const Image control = random_raster(rng, -1.0, 1.0);

  std::vector<GradCheckEntry> e;
  auto add = [&](std::string name, ad::TapeBuilder b, const Image& at) { e.push_back({std::move(name), std::move(b), at}); };

  add("loss.range", [](Tape& t, NodeId u) { return range_loss(t, u); }, wide);
  add("loss.struct.product", [f](Tape& t, NodeId u) { return struct_loss(t, u, f->x, 0.4, 0.7, 0.9, f->cal); }, pixels);
  add("loss.struct.eigen",
      [f](Tape& t, NodeId u) { return struct_loss(t, u, f->x, 0.8, 0.2, 2.1, f->cal, ComposeMode::Eigen); }, pixels);
  add("loss.map",
      [f](Tape& t, NodeId z) {
        const auto n = generate_on_tape(f->gen, f->y, z, f->op, t);
        return t.mean(t.abs(t.sub(n.x_hat, t.constant(f->x))));
      },
      control);
  add("loss.map.direct",
      [f](Tape& t, NodeId n) {
        const NodeId xh = t.add(t.cem_linear(n, f->op), t.constant(cem_offset(*f->op, f->y)));
        return t.mean(t.abs(t.sub(xh, t.constant(f->x))));
      },
      wide);
  add("loss.adv.generator", [f](Tape& t, NodeId u) {
    return t.sub(t.constant(Image::scalar(-f->critic.b)), t.sum(t.mul(u, t.constant(f->critic.w))));
  }, pixels);
  add("regularizer.tv_nullspace", [f](Tape& t, NodeId n) { return total_variation(t, t.cem_linear(n, f->op)); }, wide);

  add("edit.variance", [f](Tape& t, NodeId u) { return variance_objective(t, u, f->x0, f->inner, 0.02); }, pixels);
  add("edit.magnitude", [f](Tape& t, NodeId u) { return magnitude_objective(t, u, f->x0, f->inner, 1.5); }, pixels);
  add("edit.scribble",
      [f](Tape& t, NodeId u) { return scribble_objective(t, u, scribble(f->blob, f->colors, ScribbleKind::Color)); },
      pixels);
  add("edit.brighten",
      [f](Tape& t, NodeId u) {
        return brightness_objective(t, u, f->x0, scribble(f->blob, {}, ScribbleKind::Brighten), 1.3);
      },
      pixels);
  add("edit.darken",
      [f](Tape& t, NodeId u) {
        return brightness_objective(t, u, f->x0, scribble(f->blob, {}, ScribbleKind::Darken), 0.7);
      },
      pixels);
  add("edit.tv_min",
      [f](Tape& t, NodeId u) { return local_tv_objective(t, u, scribble(f->blob, {}, ScribbleKind::TvMin)); }, pixels);
  add("edit.imprint", [f](Tape& t, NodeId u) { return imprint_objective(t, u, f->baseline, f->place.target()); },
      pixels);
  add("edit.patch_collection.plain",
      [f](Tape& t, NodeId u) {
        return patch_collection_objective(t, u, f->x0, f->inner, f->x0, full_region(kSide, kSide));
      },
      pixels);
  add("edit.patch_collection.variance_preserving",
      [f](Tape& t, NodeId u) {
        return patch_collection_objective(t, u, f->x0, f->inner, f->x0, full_region(kSide, kSide),
                                          PatchVariant::VariancePreserving);
      },
      pixels);
  add("edit.periodicity",
      [f](Tape& t, NodeId u) { return periodicity_objective(t, u, f->blob, {{1, 0}, {0, 1}}, {3, 2}); }, pixels);
  add("edit.diversity.free",
      [f](Tape& t, NodeId u) { return diversity_objective(t, {u, t.scale(u, 0.5), t.constant(f->x0)}, f->x0); },
      pixels);
  add("edit.diversity.anchored",
      [f](Tape& t, NodeId u) {
        return diversity_objective(t, {u, t.scale(u, 0.5), t.constant(f->x0)}, f->x0, {true, 0.1});
      },
      pixels);
  add("edit.total_variation", [](Tape& t, NodeId u) { return total_variation(t, u); }, pixels);
  return e;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, double tol) {
  std::vector<GradCheckResult> out;
  for (const GradCheckEntry& e : registered_objectives(seed))
    out.push_back({e.name, ad::grad_check(e.build, e.at, 1e-5, tol)});
  return out;
}

}  // namespace cemx
