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
#include <memory>

#include "cemx/cem.hpp"
#include "cemx/error.hpp"
#include "cemx/tape.hpp"
#include "support.hpp"

using namespace cemx;
using namespace cemx::ad;

namespace {

Kernel small_kernel(std::uint64_t seed) { return testing::random_kernel(3, 3, seed); }

void check_op(const std::string& name, const TapeBuilder& f, const Image& at, double tol = 1e-4) {
  const GradCheckReport r = grad_check(f, at);
  INFO(name << " rel=" << r.max_rel_error << " abs=" << r.max_abs_error);
  CHECK(r.passed);
  CHECK(r.max_rel_error <= tol);
}

}  // namespace

TEST_CASE("forward values") {
  Tape t;
  const Image c = testing::random_image(4, 3, 2, 1);
  const NodeId k = t.constant(c);
  CHECK(max_abs_diff(t.value(k), c) == 0.0);

  Image raster(3, 2, 1, std::vector<double>{1, -2, 3, -4, 0.5, -0.25});
  Tape t2;
  const NodeId l1 = t2.sum(t2.abs(t2.constant(raster)));
  CHECK(t2.scalar(l1) == doctest::Approx(10.75).epsilon(1e-15));
}

TEST_CASE("tape encoding of the projection matches the cem module") {
  for (BoundaryMode mode : {BoundaryMode::Periodic, BoundaryMode::Replicate}) {
    auto op = std::make_shared<const CemOperator>(bicubic_kernel(2), 2, 12, 12, mode);
    const Image xinc = testing::random_image(12, 12, 3, 4);
    const Image y = testing::random_image(6, 6, 3, 5);
    Tape t;
    const NodeId x = t.leaf(xinc);
    const NodeId out = t.add(t.cem_linear(x, op), t.constant(cem_offset(*op, y)));
    CHECK(max_abs_diff(t.value(out), cem_apply(*op, xinc, y)) <= 1e-12);
  }
}

TEST_CASE("elementary gradients") {
  const Image u = testing::random_image(5, 4, 2, 7, -1, 1);
  Tape t;
  const NodeId x = t.leaf(u);
  const NodeId s = t.sum(x);
  t.backward(s);
  CHECK(max_abs_diff(t.grad(x), Image(5, 4, 2, 1.0)) == 0.0);

  Tape t2;
  const NodeId x2 = t2.leaf(u);
  const NodeId q = t2.sum(t2.square(x2));
  t2.backward(q);
  CHECK(max_abs_diff(t2.grad(x2), 2.0 * u) <= 1e-12);
  for (NodeId i = 0; i < t2.size(); ++i) CHECK(t2.grad(i).same_shape(t2.value(i)));
}

TEST_CASE("shape errors") {
  Tape t;
  const NodeId a = t.leaf(Image(3, 3, 1));
  const NodeId b = t.constant(Image(4, 3, 1));
  CHECK_THROWS_AS(t.add(a, b), Error);
  try {
    t.backward(a);
    FAIL("expected GraphShapeError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GraphShapeError);
  }
  CHECK_THROWS_AS(t.set_value(a, Image(2, 2, 1)), Error);
  CHECK_THROWS_AS(t.slice(a, Rect{2, 2, 2, 2}), Error);
}

TEST_CASE("random five-op graph against finite differences") {
  const Kernel h = small_kernel(11);
  const Image w = testing::random_image(6, 6, 1, 12, -1, 1);
  auto f = [&](Tape& t, NodeId u) {
    NodeId a = t.conv2d(u, h, BoundaryMode::Replicate);
    NodeId b = t.leaky_relu(t.sub(a, t.constant(Image(6, 6, 1, 0.5))));
    NodeId c = t.mul(b, t.constant(w));
    NodeId d = t.upsample(t.downsample(c, 2), 2);
    return t.mean(t.square(t.add(d, t.scale(c, 0.3))));
  };
  const GradCheckReport r = grad_check(f, testing::random_image(6, 6, 1, 13));
  INFO("rel=" << r.max_rel_error);
  CHECK(r.coordinates == 36);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("every differentiable op passes grad_check on 6x6") {
  const Image at = testing::random_image(6, 6, 2, 21, -0.9, 0.9);
  const Image other = testing::random_image(6, 6, 2, 22, 0.2, 1.0);
  const Kernel h = small_kernel(23);
  auto sq = [](Tape& t, NodeId n) { return t.sum(t.square(n)); };

  check_op("conv2d periodic", [&](Tape& t, NodeId u) { return sq(t, t.conv2d(u, h, BoundaryMode::Periodic)); }, at);
  check_op("conv2d replicate", [&](Tape& t, NodeId u) { return sq(t, t.conv2d(u, h, BoundaryMode::Replicate)); }, at);
  check_op("downsample", [&](Tape& t, NodeId u) { return sq(t, t.downsample(u, 2)); }, at);
  check_op("upsample", [&](Tape& t, NodeId u) { return sq(t, t.upsample(u, 2)); }, at);
  check_op("area_downscale", [&](Tape& t, NodeId u) { return sq(t, t.area_downscale(u, 3)); }, at);
  check_op("sub", [&](Tape& t, NodeId u) { return sq(t, t.sub(t.constant(other), u)); }, at);
  check_op("mul", [&](Tape& t, NodeId u) { return sq(t, t.mul(u, t.constant(other))); }, at);
  check_op("mul self", [&](Tape& t, NodeId u) { return t.sum(t.mul(u, u)); }, at);
  check_op("leaky_relu", [&](Tape& t, NodeId u) { return sq(t, t.leaky_relu(u, 0.1)); }, at);
  check_op("concat", [&](Tape& t, NodeId u) { return sq(t, t.mul(t.concat(u, u), t.constant(concat_channels(other, at)))); }, at);
  check_op("slice", [&](Tape& t, NodeId u) { return sq(t, t.slice(u, SliceSpec{1, 1, Rect{1, 2, 4, 3}})); }, at);
  check_op("broadcast", [&](Tape& t, NodeId u) {
    NodeId m = t.mean(u);
    return sq(t, t.sub(u, t.broadcast(m, Shape{6, 6, 2})));
  }, at);
  check_op("abs", [&](Tape& t, NodeId u) { return t.sum(t.abs(u)); }, at);
  check_op("sqrt", [&](Tape& t, NodeId u) { return t.sum(t.sqrt(t.add(t.square(u), t.constant(other)))); }, at);
  check_op("reciprocal", [&](Tape& t, NodeId u) { return t.sum(t.reciprocal(t.add(t.square(u), t.constant(other)))); }, at);
  check_op("add_n", [&](Tape& t, NodeId u) { return sq(t, t.add_n({u, t.scale(u, 2.0), t.constant(other)})); }, at);

  auto bank = std::make_shared<const std::vector<Image>>(std::vector<Image>{
      testing::random_image(6, 6, 2, 31), testing::random_image(6, 6, 2, 32), at + 0.01 * other});
  check_op("min_sq_dist", [&](Tape& t, NodeId u) { return t.min_sq_dist(u, bank); }, at);
  check_op("min_of", [&](Tape& t, NodeId u) {
    return t.min_of({t.sum(t.square(u)), t.sum(t.abs(u)), t.scale(t.sum(u), 0.1)});
  }, at);

  auto op = std::make_shared<const CemOperator>(gaussian_kernel(5, 0.9), 2, 6, 6);
  check_op("cem_linear", [&](Tape& t, NodeId u) { return sq(t, t.sub(t.cem_linear(u, op), t.constant(other))); }, at);
  auto rep = std::make_shared<const CemOperator>(small_kernel(5), 2, 6, 6, BoundaryMode::Replicate, 2);
  check_op("cem_linear replicate", [&](Tape& t, NodeId u) { return sq(t, t.sub(t.cem_linear(u, rep), t.constant(other))); }, at);
}

TEST_CASE("conv_layer gradients w.r.t. input, weights and bias") {
  const Image x = testing::random_image(6, 6, 2, 41, -1, 1);
  const Image w = testing::random_image(3, 3, 6, 42, -0.5, 0.5);  // cout=3, cin=2
  const Image b = testing::random_image(1, 1, 3, 43, -0.5, 0.5);

  // Forward against a per-plane periodic convolution.
  Tape t;
  const NodeId out = t.conv_layer(t.constant(x), t.constant(w), t.constant(b));
  for (int o = 0; o < 3; ++o) {
    Image expect(6, 6, 1, b.at(o, 0, 0));
    for (int i = 0; i < 2; ++i) {
      Kernel k(3, 3, std::vector<double>(w.plane(o * 2 + i).begin(), w.plane(o * 2 + i).end()));
      add_inplace(expect, testing::brute_circular_conv(select_channels(x, i, 1), k));
    }
    CHECK(max_abs_diff(select_channels(t.value(out), o, 1), expect) <= 1e-12);
  }

  check_op("conv_layer x", [&](Tape& t, NodeId u) {
    return t.sum(t.square(t.conv_layer(u, t.constant(w), t.constant(b))));
  }, x);
  check_op("conv_layer w", [&](Tape& t, NodeId u) {
    return t.sum(t.square(t.conv_layer(t.constant(x), u, t.constant(b))));
  }, w);
  check_op("conv_layer b", [&](Tape& t, NodeId u) {
    return t.sum(t.square(t.conv_layer(t.constant(x), t.constant(w), u)));
  }, b);
}

TEST_CASE("linear functions check to roundoff") {
  const Kernel h = small_kernel(51);
  const GradCheckReport r = grad_check(
      [&](Tape& t, NodeId u) { return t.mean(t.scale(t.conv2d(u, h, BoundaryMode::Periodic), 3.0)); },
      testing::random_image(6, 6, 1, 52, -0.1, 0.1));
  CHECK(r.max_rel_error <= 1e-10);
}

TEST_CASE("clip straight-through convention") {
  Image u(6, 6, 1);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = 0.1 + 0.8 * double(i) / 35.0;
  check_op("clip interior", [](Tape& t, NodeId x) { return t.sum(t.square(t.clip(x))); }, u);

  Image v = u;
  v[0] = -0.5;
  v[1] = 1.5;
  v[2] = 0.0;
  v[3] = 1.0;
  Tape t;
  const NodeId x = t.leaf(v);
  const NodeId f = t.sum(t.clip(x));
  t.backward(f);
  CHECK(t.grad(x)[0] == 0.0);
  CHECK(t.grad(x)[1] == 0.0);
  CHECK(t.grad(x)[2] == 1.0);
  CHECK(t.grad(x)[3] == 1.0);
  CHECK(t.grad(x)[4] == 1.0);
}

TEST_CASE("min nodes break ties toward the lowest index") {
  const Image a(2, 2, 1, 0.5);
  auto bank = std::make_shared<const std::vector<Image>>(
      std::vector<Image>{Image(2, 2, 1, 0.0), Image(2, 2, 1, 1.0), Image(2, 2, 1, 0.0)});
  Tape t;
  const NodeId x = t.leaf(a);
  const NodeId m = t.min_sq_dist(x, bank);
  CHECK(t.node(m).selected == 0);
  t.backward(m);
  CHECK(max_abs_diff(t.grad(x), Image(2, 2, 1, 1.0)) <= 1e-15);

  Tape t2;
  const NodeId p = t2.leaf(Image::scalar(2.0));
  const NodeId q = t2.leaf(Image::scalar(2.0));
  const NodeId mn = t2.min_of({p, q});
  t2.backward(mn);
  CHECK(t2.grad(p)[0] == 1.0);
  CHECK(t2.grad(q)[0] == 0.0);
}

TEST_CASE("tape invariants") {
  const Image u = testing::random_image(6, 6, 1, 61);
  const Kernel h = small_kernel(62);
  auto f1 = [&](Tape& t, NodeId x) { return t.sum(t.square(t.conv2d(x, h, BoundaryMode::Periodic))); };
  auto f2 = [&](Tape& t, NodeId x) { return t.mean(t.abs(t.sub(x, t.constant(Image(6, 6, 1, 0.5))))); };

  auto grad_of = [&](auto f) {
    Tape t;
    const NodeId x = t.leaf(u);
    t.backward(f(t, x));
    return t.grad(x);
  };
  Tape t;
  const NodeId x = t.leaf(u);
  const NodeId root = t.add(f1(t, x), f2(t, x));
  std::vector<Image> before;
  for (NodeId i = 0; i < t.size(); ++i) before.push_back(t.value(i));
  t.backward(root);
  CHECK(max_abs_diff(t.grad(x), grad_of(f1) + grad_of(f2)) <= 1e-14);
  for (NodeId i = 0; i < t.size(); ++i) CHECK(max_abs_diff(t.value(i), before[i]) == 0.0);

  // Re-running forward after set_value reproduces a fresh tape.
  const Image u2 = testing::random_image(6, 6, 1, 63);
  t.set_value(x, u2);
  t.forward();
  Tape fresh;
  const NodeId x2 = fresh.leaf(u2);
  const NodeId r2 = fresh.add(f1(fresh, x2), f2(fresh, x2));
  CHECK(t.scalar(root) == fresh.scalar(r2));
}
