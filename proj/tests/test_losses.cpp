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
#include <numbers>

#include "cemx/error.hpp"
#include "cemx/losses.hpp"
#include "support.hpp"

using namespace cemx;

namespace {

constexpr double kPi = std::numbers::pi;

// Clamped central differences written out by hand.
void brute_gradients(const Image& l, Image& gx, Image& gy) {
  const int W = l.width(), H = l.height();
  gx = Image(W, H, 1);
  gy = Image(W, H, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, W - 1);
      const int yu = std::max(y - 1, 0), yd = std::min(y + 1, H - 1);
      gx.at(0, y, x) = 0.5 * (l.at(0, y, xr) - l.at(0, y, xl));
      gy.at(0, y, x) = 0.5 * (l.at(0, yd, x) - l.at(0, yu, x));
    }
}

Image brute_luma(const Image& x) {
  if (x.channels() == 1) return x;
  Image l(x.width(), x.height(), 1);
  for (int y = 0; y < x.height(); ++y)
    for (int xx = 0; xx < x.width(); ++xx)
      l.at(0, y, xx) = 0.299 * x.at(0, y, xx) + 0.587 * x.at(1, y, xx) + 0.114 * x.at(2, y, xx);
  return l;
}

// Angle in degrees (mod 180) of the dominant eigenvector of a symmetric 2x2.
double dominant_angle(double a, double b, double d) {
  const double ang = 0.5 * std::atan2(2 * b, a - d) * 180.0 / kPi;
  return ang < 0 ? ang + 180.0 : ang;
}

PercentileCalibration point_cal(const StructureTensor& s) {
  return {{s.s11, s.s11}, {s.s12, s.s12}, {s.s22, s.s22}};
}

}  // namespace

TEST_CASE("range loss") {
  CHECK(range_loss(testing::random_image(6, 6, 3, 1)) == 0.0);
  CHECK(range_loss(Image(4, 4, 3, 1.5)) == doctest::Approx(0.5).epsilon(1e-15));
  Image one(10, 10, 1, 0.5);
  one[37] = -0.2;
  CHECK(range_loss(one) == doctest::Approx(0.002).epsilon(1e-12));
  ad::Tape t;
  const ad::NodeId r = range_loss(t, t.constant(one));
  CHECK(t.scalar(r) == doctest::Approx(0.002).epsilon(1e-12));
}

TEST_CASE("structure tensor measurement") {
  const StructureTensor zero = compute_St(Image(8, 8, 3, 0.4));
  CHECK(zero.s11 == 0.0);
  CHECK(zero.s12 == 0.0);
  CHECK(zero.s22 == 0.0);

  Image ramp(9, 7, 1);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 9; ++x) ramp.at(0, y, x) = x;
  Image interior(9, 7, 1);
  for (int y = 1; y < 6; ++y)
    for (int x = 1; x < 8; ++x) interior.at(0, y, x) = 1.0;
  const StructureTensor r = compute_St(ramp, interior);
  CHECK(r.s11 == doctest::Approx(35.0).epsilon(1e-12));
  CHECK(r.s12 == 0.0);
  CHECK(r.s22 == 0.0);

  CHECK_THROWS_AS(compute_St(ramp, Image(9, 7, 1)), Error);

  // PSD and trace against hand-computed gradients.
  const Image x = testing::random_image(10, 8, 3, 5);
  const Image mask = testing::random_image(10, 8, 1, 6);
  const StructureTensor s = compute_St(x, mask);
  Image gx, gy;
  brute_gradients(brute_luma(x), gx, gy);
  double trace = 0.0, s12 = 0.0;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    trace += mask[i] * (gx[i] * gx[i] + gy[i] * gy[i]);
    s12 += mask[i] * gx[i] * gy[i];
  }
  CHECK(s.s11 + s.s22 == doctest::Approx(trace).epsilon(1e-12));
  CHECK(s.s12 == doctest::Approx(s12).epsilon(1e-12));
  CHECK(s.s11 >= -1e-9);
  CHECK(s.s22 >= -1e-9);
  CHECK(s.s11 * s.s22 - s.s12 * s.s12 >= -1e-9);

  ad::Tape t;
  const auto n = compute_St(t, t.constant(x), mask);
  CHECK(t.scalar(n.s11) == doctest::Approx(s.s11).epsilon(1e-12));
  CHECK(t.scalar(n.s12) == doctest::Approx(s.s12).epsilon(1e-12));
  CHECK(t.scalar(n.s22) == doctest::Approx(s.s22).epsilon(1e-12));
}

TEST_CASE("45 degree grating orientation") {
  Image g(32, 32, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) g.at(c, y, x) = 0.5 + 0.4 * std::sin(2 * kPi * (x + y) / 8.0);
  const StructureTensor s = compute_St(g);
  CHECK(std::fabs(dominant_angle(s.s11, s.s12, s.s22) - 45.0) <= 5.0);
  const StructureTensor d = compose_Sd(1.0, 0.0, kPi / 4, ComposeMode::Eigen);
  CHECK(std::fabs(dominant_angle(s.s11, s.s12, s.s22) - dominant_angle(d.s11, d.s12, d.s22)) <= 5.0);
}

TEST_CASE("compose desired tensor") {
  for (ComposeMode m : {ComposeMode::Product, ComposeMode::Eigen}) {
    const StructureTensor d = compose_Sd(0.7, 0.2, 0.0, m);
    CHECK(d.s11 == doctest::Approx(0.7));
    CHECK(d.s12 == 0.0);
    CHECK(d.s22 == doctest::Approx(0.2));
  }
  const StructureTensor p = compose_Sd(1.0, 1.0, kPi / 4, ComposeMode::Product);
  CHECK(p.s11 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.s12 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.s22 == doctest::Approx(1.0).epsilon(1e-12));
  const StructureTensor e = compose_Sd(1.0, 0.0, kPi / 4, ComposeMode::Eigen);
  CHECK(e.s11 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.s12 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.s22 == doctest::Approx(0.5).epsilon(1e-12));

  // The modes agree when sin*cos vanishes or l1*l2 == l1 - l2 (l1 = 2/3, l2 = 0.4... solve l2 = l1/(1+l1)).
  const double l1 = 0.8, l2 = l1 / (1 + l1);
  const StructureTensor a = compose_Sd(l1, l2, 1.1, ComposeMode::Product), b = compose_Sd(l1, l2, 1.1, ComposeMode::Eigen);
  CHECK(a.s12 == doctest::Approx(b.s12).epsilon(1e-12));
  CHECK(compose_Sd(0.3, 0.9, kPi / 2, ComposeMode::Product).s12 ==
        doctest::Approx(compose_Sd(0.3, 0.9, kPi / 2, ComposeMode::Eigen).s12).epsilon(1e-12));

  CHECK_THROWS_AS(compose_Sd(1.2, 0.0, 0.0), Error);
  CHECK_THROWS_AS(compose_Sd(0.5, -0.1, 0.0), Error);
  CHECK_THROWS_AS(compose_Sd(0.5, 0.5, 7.0), Error);
}

TEST_CASE("normalization and adjustment") {
  Image ramp(6, 6, 1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) ramp.at(0, y, x) = 0.1 * x;
  const StructureTensor s{2.0, -1.0, 3.0};
  const StructureTensor n = normalize_St(s, ramp);
  CHECK(n.s11 == doctest::Approx(2e12));
  CHECK(n.s12 == doctest::Approx(-1e12));

  const Image x(3, 3, 1, std::vector<double>{0.1, 0.5, 0.2, 0.9, 0.3, 0.7, 0.4, 0.8, 0.6});
  Image gx, gy;
  brute_gradients(x, gx, gy);
  double div = 0.0;
  for (std::size_t i = 0; i < 9; ++i) div += std::fabs(gx[i] * gy[i]);
  CHECK(normalization_divisor(x) == doctest::Approx(div).epsilon(1e-14));
  const StructureTensor h = normalize_St(s, x);
  CHECK(h.s22 == doctest::Approx(3.0 / div).epsilon(1e-14));
  const StructureTensor h2 = normalize_St({4.0, -2.0, 6.0}, x);
  CHECK(h2.s11 == doctest::Approx(2 * h.s11).epsilon(1e-14));

  const StructureTensor d{0.5, -0.25, 1.0};
  const StructureTensor id = adjust_Sd(d, PercentileCalibration{});
  CHECK(id.s11 == d.s11);
  CHECK(id.s12 == d.s12);
  CHECK(id.s22 == d.s22);
  const StructureTensor c = adjust_Sd(d, point_cal({3.0, 3.0, 3.0}));
  CHECK(c.s11 == 3.0);
  CHECK(c.s12 == 3.0);
  PercentileCalibration cal;
  cal.s11 = {0.0, 4.0};
  CHECK(adjust_Sd(d, cal).s11 == doctest::Approx(3.0));
}

TEST_CASE("structure loss") {
  const Image x = testing::random_image(12, 12, 3, 11);
  const Image xh = testing::random_image(12, 12, 3, 12);
  const StructureTensor s = normalize_St(compute_St(xh), x);
  CHECK(struct_loss(xh, x, 0.3, 0.6, 1.0, point_cal(s)) == doctest::Approx(0.0).epsilon(1e-12));
  PercentileCalibration off = point_cal(s);
  off.s12 = {s.s12 + 0.3, s.s12 + 0.3};
  CHECK(struct_loss(xh, x, 0.3, 0.6, 1.0, off) == doctest::Approx(0.3).epsilon(1e-9));

  PercentileCalibration cal{{0.1, 2.0}, {-0.5, 0.4}, {0.2, 1.5}};
  const double l1 = 0.35, l2 = 0.8, th = 2.2;
  const double c = std::cos(th), sn = std::sin(th);
  const double d11 = l1 * c * c + l2 * sn * sn, d12 = l1 * l2 * sn * c, d22 = l1 * sn * sn + l2 * c * c;
  auto adj = [](double v, double p5, double p95) { return (p95 - p5) * v / 2 + (p95 + p5) / 2; };
  const double expect = std::fabs(s.s11 - adj(d11, 0.1, 2.0)) + std::fabs(s.s12 - adj(d12, -0.5, 0.4)) +
                        std::fabs(s.s22 - adj(d22, 0.2, 1.5));
  CHECK(struct_loss(xh, x, l1, l2, th, cal) == doctest::Approx(expect).epsilon(1e-12));
  ad::Tape t;
  CHECK(t.scalar(struct_loss(t, t.constant(xh), x, l1, l2, th, cal)) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(struct_loss(xh, x, l1, l2, th, cal) >= 0.0);
}

TEST_CASE("percentile calibration") {
  CHECK(percentile({0.0, 10.0}, 0.05) == doctest::Approx(0.5));
  CHECK(percentile({0.0, 10.0}, 0.95) == doctest::Approx(9.5));
  const PercentileCalibration two = calibrate_percentiles(std::vector<StructureTensor>{{0, 0, 0}, {10, 10, 10}});
  CHECK(two.s11.p5 == doctest::Approx(0.5));
  CHECK(two.s22.p95 == doctest::Approx(9.5));

  const Image a = testing::random_image(8, 8, 3, 21);
  const PercentileCalibration same = calibrate_percentiles(std::vector<Image>{a, a, a});
  CHECK(same.s11.p5 == same.s11.p95);
  CHECK(same.s12.p5 == same.s12.p95);

  const Image b = testing::random_image(8, 8, 3, 22);
  const auto ab = calibrate_percentiles(std::vector<Image>{a, b});
  const auto abb = calibrate_percentiles(std::vector<Image>{a, b, b, a});
  CHECK(ab.s11.p5 <= ab.s11.p95);
  // Duplicating every image keeps the extremes and only moves the interpolation points.
  const double lo = std::min(ab.s11.p5, ab.s11.p95), hi = std::max(ab.s11.p5, ab.s11.p95);
  const double va = normalize_St(compute_St(a), a).s11, vb = normalize_St(compute_St(b), b).s11;
  const double mn = std::min(va, vb), mx = std::max(va, vb);
  CHECK(ab.s11.p5 == doctest::Approx(mn + 0.05 * (mx - mn)).epsilon(1e-12));
  CHECK(abb.s11.p5 == doctest::Approx(mn).epsilon(1e-12));  // index 0.15 falls between two copies of the min
  CHECK(abb.s11.p95 == doctest::Approx(mx).epsilon(1e-12));
  CHECK(abb.s11.p5 <= lo);
  CHECK(abb.s11.p95 >= hi);
  const auto ab_plus = calibrate_percentiles(std::vector<Image>{a, b, a});
  CHECK(ab_plus.s11.p5 >= mn);
  CHECK(ab_plus.s11.p95 <= mx);

  try {
    calibrate_percentiles(std::vector<Image>{a});
    FAIL("expected CalibrationError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CalibrationError);
  }
  const auto back = calibration_from_json(calibration_to_json(ab));
  CHECK(back.s12.p95 == ab.s12.p95);
  CHECK_THROWS_AS(calibration_from_json(R"({"s11":[2,1],"s12":[0,1],"s22":[0,1]})"), Error);
}

TEST_CASE("map loss with the generator") {
  auto op = std::make_shared<const CemOperator>(bicubic_kernel(2), 2, 8, 8);
  const GeneratorParams p = GeneratorParams::toy(2, 3, 31);
  const Image y = degrade(*op, testing::random_image(8, 8, 3, 32));
  const Image z0 = testing::random_image(8, 8, 3, 33, -1, 1);
  const Image x = generate(p, y, z0, *op).x_hat;

  const MapResult at_min = map_loss(p, y, x, op, z0, 10);
  CHECK(at_min.values.front() <= 1e-12);
  CHECK(max_abs_diff(at_min.z, z0) <= 1e-12);

  const Image target = testing::random_image(8, 8, 3, 34);
  const MapResult none = map_loss(p, y, target, op, z0, 0);
  CHECK(none.values.size() == 1);
  CHECK(none.value == none.values.front());

  const MapResult ten = map_loss(p, y, target, op, z0, 10);
  CHECK(ten.values.size() >= 2);
  for (std::size_t i = 1; i < ten.values.size(); ++i) CHECK(ten.values[i] <= ten.values[i - 1]);
  CHECK(ten.value < ten.values.front());
}

TEST_CASE("map loss in the direct parameterization converges") {
  auto op = std::make_shared<const CemOperator>(bicubic_kernel(2), 2, 16, 16);
  const Image x = testing::random_image(16, 16, 3, 41);
  const Image y = degrade(*op, x);
  const MapResult r = map_loss_direct(y, x, op, Image(16, 16, 3), 500);
  INFO("final=" << r.value << " after " << r.values.size() - 1 << " steps");
  CHECK(r.value <= 1e-6);
  for (std::size_t i = 1; i < r.values.size(); ++i) CHECK(r.values[i] <= r.values[i - 1]);
}

TEST_CASE("linear critic") {
  const Image real = testing::random_image(4, 4, 1, 51), fake = testing::random_image(4, 4, 1, 52);
  Image w(4, 4, 1, 0.25);  // unit norm
  CHECK(critic_losses({w, 0.3}, real, fake, 10.0).penalty == doctest::Approx(0.0).epsilon(1e-15));
  const CriticLosses z = critic_losses({Image(4, 4, 1), 0.0}, real, fake, 10.0);
  CHECK(z.loss_d == doctest::Approx(10.0));
  CHECK(z.loss_g == 0.0);

  const Image wr = testing::random_image(4, 4, 1, 53, -1, 1);
  double dr = 0.2, df = 0.2, nn = 0.0;
  for (std::size_t i = 0; i < 16; ++i) {
    dr += wr[i] * real[i];
    df += wr[i] * fake[i];
    nn += wr[i] * wr[i];
  }
  const CriticLosses c = critic_losses({wr, 0.2}, real, fake, 10.0);
  CHECK(c.loss_d == doctest::Approx(df - dr + 10.0 * (std::sqrt(nn) - 1) * (std::sqrt(nn) - 1)).epsilon(1e-12));
  CHECK(c.loss_g == doctest::Approx(-df).epsilon(1e-12));
}

TEST_CASE("credibility gate") {
  CHECK(credibility_gate(std::vector<bool>(10, true)));
  std::vector<bool> nine(9, true);
  CHECK_FALSE(credibility_gate(nine));
  nine.push_back(false);
  CHECK_FALSE(credibility_gate(nine));
  std::vector<bool> recovered{false, false, true, true, true, true, true, true, true, true, true, true};
  CHECK(credibility_gate(recovered));
  recovered.push_back(false);
  CHECK_FALSE(credibility_gate(recovered));
}

TEST_CASE("total loss") {
  const LossWeights w;
  CHECK(total_loss({}, w) == 0.0);
  CHECK(total_loss({1, 1, 1, 1}, w) == 5102.0);
  CHECK(total_loss({0.7, 3, 4, 5}, {0, 0, 0, 0}) == 0.7);
  CHECK_THROWS_AS((LossWeights{-1, 1, 1, 1}.validate()), Error);
}

TEST_CASE("loss gradients pass grad_check on 12x12") {
  const Image at = testing::random_image(12, 12, 3, 61, -0.4, 1.4);
  auto range = ad::grad_check([](ad::Tape& t, ad::NodeId x) { return range_loss(t, x); }, at);
  INFO("range rel=" << range.max_rel_error);
  CHECK(range.max_rel_error <= 1e-4);

  const Image x = testing::random_image(12, 12, 3, 62);
  PercentileCalibration cal{{0.1, 2.0}, {-0.5, 0.4}, {0.2, 1.5}};
  auto st = ad::grad_check([&](ad::Tape& t, ad::NodeId u) { return struct_loss(t, u, x, 0.4, 0.7, 0.9, cal); },
                           testing::random_image(12, 12, 3, 63));
  INFO("struct rel=" << st.max_rel_error);
  CHECK(st.max_rel_error <= 1e-4);

  auto op = std::make_shared<const CemOperator>(bicubic_kernel(2), 2, 12, 12);
  const Image y = degrade(*op, x);
  const GeneratorParams p = GeneratorParams::toy(2, 3, 64);
  auto map = ad::grad_check(
      [&](ad::Tape& t, ad::NodeId z) {
        const auto n = generate_on_tape(p, y, z, op, t);
        return t.mean(t.abs(t.sub(n.x_hat, t.constant(x))));
      },
      testing::random_image(12, 12, 3, 65, -1, 1));
  INFO("map rel=" << map.max_rel_error);
  CHECK(map.max_rel_error <= 1e-4);
}
