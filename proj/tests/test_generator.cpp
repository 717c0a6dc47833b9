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

#include "cemx/error.hpp"
#include "cemx/generator.hpp"
#include "support.hpp"

using namespace cemx;

namespace {

double keys(double t) {
  t = std::fabs(t);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

// Periodic cubic interpolation of y with knots at multiples of factor.
Image interp_oracle(const Image& y, int a) {
  const int w = y.width(), h = y.height();
  Image out(w * a, h * a, y.channels());
  for (int c = 0; c < y.channels(); ++c)
    for (int Y = 0; Y < h * a; ++Y)
      for (int X = 0; X < w * a; ++X) {
        double acc = 0;
        for (int i = Y / a - 2; i <= Y / a + 2; ++i)
          for (int j = X / a - 2; j <= X / a + 2; ++j)
            acc += y.at(c, ((i % h) + h) % h, ((j % w) + w) % w) * keys((Y - a * i) / double(a)) *
                   keys((X - a * j) / double(a));
        out.at(c, Y, X) = acc;
      }
  return out;
}

struct Fixture {
  int a = 2;
  Image x = testing::random_image(8, 8, 3, 101);
  CemHandle op = std::make_shared<const CemOperator>(bicubic_kernel(2), 2, 8, 8);
  Image y = degrade(*op, x);
};

}  // namespace

TEST_CASE("bicubic upsample interpolates on the retained grid") {
  const Image y = testing::random_image(5, 4, 2, 1);
  for (int a : {1, 2, 3}) {
    const Image up = bicubic_upsample(y, a);
    CHECK(max_abs_diff(up, interp_oracle(y, a)) <= 1e-12);
    CHECK(max_abs_diff(downsample(up, a), y) <= 1e-12);
  }
}

TEST_CASE("identity configuration reproduces the bicubic upsample") {
  Fixture f;
  const GeneratorParams p = GeneratorParams::identity(2, 3);
  const auto out = generate(p, f.y, testing::random_image(8, 8, 3, 5, -1, 1), *f.op);
  CHECK(max_abs_diff(out.x_inc, interp_oracle(f.y, 2)) <= 1e-12);
}

TEST_CASE("zero z-weights make the output independent of z") {
  Fixture f;
  const GeneratorParams p = GeneratorParams::toy(2, 3, 7, true);
  const auto a = generate(p, f.y, testing::random_image(8, 8, 3, 11, -1, 1), *f.op);
  const auto b = generate(p, f.y, testing::random_image(8, 8, 3, 12, -1, 1), *f.op);
  CHECK(a.x_hat.data() == b.x_hat.data());
  CHECK(a.x_inc.data() == b.x_inc.data());

  // Finite differences of x_hat w.r.t. z vanish too.
  ad::Tape t;
  const ad::NodeId z = t.leaf(testing::random_image(8, 8, 3, 13, -1, 1));
  const auto nodes = generate_on_tape(p, f.y, z, f.op, t);
  const ad::NodeId loss = t.sum(t.square(nodes.x_hat));
  t.backward(loss);
  CHECK(linf(t.grad(z)) == 0.0);
  const double base = t.scalar(loss);
  Image zp = t.value(z);
  zp[17] += 1e-3;
  t.set_value(z, zp);
  t.forward();
  CHECK(t.scalar(loss) == base);
}

TEST_CASE("outputs are consistent for any parameters") {
  Fixture f;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const GeneratorParams p = GeneratorParams::toy(2, 3, seed);
    const auto out = generate(p, f.y, testing::random_image(8, 8, 3, seed + 50, -1, 1), *f.op);
    CHECK(max_abs_diff(degrade(*f.op, out.x_hat), f.y) <= 1e-8);
  }
  CemHandle rep = std::make_shared<const CemOperator>(bicubic_kernel(2), 2, 16, 16, BoundaryMode::Replicate, 2);
  const Image y = degrade(*rep, testing::random_image(16, 16, 3, 3));
  const auto out = generate(GeneratorParams::toy(2, 3, 9), y, testing::random_image(16, 16, 3, 4, -1, 1), *rep);
  CHECK(consistency_residual(*rep, out.x_hat, y).linf <= 1e-3);
}

TEST_CASE("tape path matches and differentiates") {
  Fixture f;
  const GeneratorParams p = GeneratorParams::toy(2, 3, 21);
  const Image z0 = testing::random_image(8, 8, 3, 22, -1, 1);
  ad::Tape t;
  const ad::NodeId z = t.leaf(z0);
  const auto nodes = generate_on_tape(p, f.y, z, f.op, t);
  const auto direct = generate(p, f.y, z0, *f.op);
  CHECK(max_abs_diff(t.value(nodes.x_hat), direct.x_hat) <= 1e-12);
  CHECK(max_abs_diff(t.value(nodes.x_inc), direct.x_inc) <= 1e-12);

  const auto r = ad::grad_check(
      [&](ad::Tape& tp, ad::NodeId zz) {
        const auto n = generate_on_tape(p, f.y, zz, f.op, tp);
        return tp.sum(tp.square(n.x_hat));
      },
      z0);
  INFO("rel=" << r.max_rel_error);
  CHECK(r.max_rel_error <= 1e-4);

  // The projection fixes the orthogonal-complement part, so z cannot move it.
  const Image c = testing::random_image(8, 8, 3, 23);
  ad::Tape t2;
  const ad::NodeId z2 = t2.leaf(z0);
  const auto n2 = generate_on_tape(p, f.y, z2, f.op, t2);
  const ad::NodeId perp = t2.sub(n2.x_hat, t2.cem_linear(n2.x_hat, f.op));
  const ad::NodeId loss = t2.sum(t2.square(t2.sub(perp, t2.constant(c))));
  t2.backward(loss);
  CHECK(linf(t2.grad(z2)) <= 1e-8);
}

TEST_CASE("generate is deterministic") {
  Fixture f;
  const GeneratorParams p = GeneratorParams::toy(2, 3, 31);
  const Image z = testing::random_image(8, 8, 3, 32, -1, 1);
  CHECK(generate(p, f.y, z, *f.op).x_hat.data() == generate(p, f.y, z, *f.op).x_hat.data());
  CHECK(GeneratorParams::toy(2, 3, 31).layers[1].weights.data() == p.layers[1].weights.data());
}

TEST_CASE("direct_param") {
  Fixture f;
  CHECK(max_abs_diff(direct_param(f.y, Image(8, 8, 3), *f.op), cem_offset(*f.op, f.y)) <= 1e-15);
  CHECK(max_abs_diff(direct_param(f.y, f.x, *f.op), f.x) <= 1e-8);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image xh = direct_param(f.y, testing::random_image(8, 8, 3, 40 + s, -2, 2), *f.op);
    CHECK(max_abs_diff(degrade(*f.op, xh), f.y) <= 1e-8);
  }
}

TEST_CASE("weights round-trip through JSON") {
  Fixture f;
  const GeneratorParams p = GeneratorParams::toy(2, 3, 41);
  testing::TempDir dir;
  save_generator(p, dir.file("w.json"));
  const GeneratorParams q = load_generator(dir.file("w.json"));
  const Image z = testing::random_image(8, 8, 3, 42, -1, 1);
  CHECK(generate(p, f.y, z, *f.op).x_hat.data() == generate(q, f.y, z, *f.op).x_hat.data());

  CHECK_THROWS_AS(generator_from_json("{"), Error);
  CHECK_THROWS_AS(generator_from_json(R"({"format":"cemx-generator","factor":2,"channels":3,"layers":[]})"), Error);
  GeneratorParams broken = p;
  broken.layers[1].in_channels = 5;
  try {
    broken.validate();
    FAIL("expected InvalidParam");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidParam);
  }
}

TEST_CASE("dimension errors") {
  Fixture f;
  const GeneratorParams p = GeneratorParams::toy(2, 3, 51);
  try {
    generate(p, f.y, Image(6, 6, 3), *f.op);
    FAIL("expected InvalidDims");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidDims);
  }
  CHECK_THROWS_AS(generate(p, f.y, Image(8, 8, 2), *f.op), Error);
  CHECK_THROWS_AS(generate(GeneratorParams::toy(2, 1, 1), f.y, Image(8, 8, 3), *f.op), Error);
}
