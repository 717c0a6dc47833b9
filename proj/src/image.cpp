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

#include "cemx/image.hpp"

#include <algorithm>
#include <cmath>

#include "cemx/error.hpp"
#include "cemx/kernel.hpp"

namespace cemx {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidDims, what);
}

void require_same(const Image& a, const Image& b) {
  require(a.same_shape(b), "image shapes differ");
}

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

// idx[p * taps + t] = source index feeding output p through tap t.
std::vector<int> source_table(int n, int taps, int center, BoundaryMode mode) {
  std::vector<int> idx(std::size_t(n) * taps);
  for (int p = 0; p < n; ++p) {
    for (int t = 0; t < taps; ++t) {
      int s = p - (t - center);
      idx[std::size_t(p) * taps + t] = mode == BoundaryMode::Periodic ? wrap(s, n) : clamp_index(s, n);
    }
  }
  return idx;
}

double cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  require(width >= 1 && height >= 1 && channels >= 1, "image dims must be positive");
  data_.assign(std::size_t(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  require(width >= 1 && height >= 1 && channels >= 1, "image dims must be positive");
  require(data_.size() == std::size_t(width) * height * channels, "data length != width*height*channels");
}

double Image::value() const {
  if (data_.size() != 1) throw Error(ErrorCode::GraphShapeError, "value() on a non-scalar image");
  return data_[0];
}

Image operator+(const Image& a, const Image& b) {
  require_same(a, b);
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Image operator-(const Image& a, const Image& b) {
  require_same(a, b);
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Image operator*(double s, const Image& a) {
  Image out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

void add_inplace(Image& a, const Image& b, double scale) {
  require_same(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

double dot(const Image& a, const Image& b) {
  require_same(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sum(const Image& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double norm2(const Image& a) { return dot(a, a); }

double linf(const Image& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Image& a, const Image& b) { return linf(a - b); }

Image clip01(const Image& a) {
  Image out = a;
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Image conv2d(const Image& img, const Kernel& taps, BoundaryMode mode) {
  const int W = img.width(), H = img.height();
  const int R = taps.rows(), C = taps.cols();
  const auto rows = source_table(H, R, taps.center_row(), mode);
  const auto cols = source_table(W, C, taps.center_col(), mode);
  Image out(W, H, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    auto src = img.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = 0; i < R; ++i) {
          const double* row = src.data() + std::size_t(rows[std::size_t(y) * R + i]) * W;
          const int* cidx = cols.data() + std::size_t(x) * C;
          for (int j = 0; j < C; ++j) acc += taps.at(i, j) * row[cidx[j]];
        }
        dst[std::size_t(y) * W + x] = acc;
      }
    }
  }
  return out;
}

Image conv2d_adjoint(const Image& img, const Kernel& taps, BoundaryMode mode) {
  if (mode == BoundaryMode::Periodic) return conv2d(img, mirror(taps), mode);
  const int W = img.width(), H = img.height();
  const int R = taps.rows(), C = taps.cols();
  const auto rows = source_table(H, R, taps.center_row(), mode);
  const auto cols = source_table(W, C, taps.center_col(), mode);
  Image out(W, H, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    auto src = img.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double g = src[std::size_t(y) * W + x];
        if (g == 0.0) continue;
        for (int i = 0; i < R; ++i) {
          double* row = dst.data() + std::size_t(rows[std::size_t(y) * R + i]) * W;
          const int* cidx = cols.data() + std::size_t(x) * C;
          for (int j = 0; j < C; ++j) row[cidx[j]] += taps.at(i, j) * g;
        }
      }
    }
  }
  return out;
}

Image downsample(const Image& img, int factor) {
  require(factor >= 1, "factor must be >= 1");
  require(img.width() % factor == 0 && img.height() % factor == 0, "dims not divisible by factor");
  const int w = img.width() / factor, h = img.height() / factor;
  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y * factor, x * factor);
  return out;
}

Image upsample(const Image& img, int factor) {
  require(factor >= 1, "factor must be >= 1");
  Image out(img.width() * factor, img.height() * factor, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y * factor, x * factor) = img.at(c, y, x);
  return out;
}

Image crop(const Image& img, Rect r) {
  require(r.w >= 1 && r.h >= 1 && r.x >= 0 && r.y >= 0 && r.x + r.w <= img.width() &&
              r.y + r.h <= img.height(),
          "crop rectangle outside image");
  Image out(r.w, r.h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x) out.at(c, y, x) = img.at(c, r.y + y, r.x + x);
  return out;
}

Image pad_replicate(const Image& img, int pad) {
  require(pad >= 0, "negative pad");
  const int W = img.width(), H = img.height();
  Image out(W + 2 * pad, H + 2 * pad, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        out.at(c, y, x) = img.at(c, clamp_index(y - pad, H), clamp_index(x - pad, W));
  return out;
}

Image pad_replicate_adjoint(const Image& padded, int pad) {
  const int W = padded.width() - 2 * pad, H = padded.height() - 2 * pad;
  require(W >= 1 && H >= 1, "padded image smaller than its pad");
  Image out(W, H, padded.channels());
  for (int c = 0; c < padded.channels(); ++c)
    for (int y = 0; y < padded.height(); ++y)
      for (int x = 0; x < padded.width(); ++x)
        out.at(c, clamp_index(y - pad, H), clamp_index(x - pad, W)) += padded.at(c, y, x);
  return out;
}

Image embed(const Image& img, int pad) {
  Image out(img.width() + 2 * pad, img.height() + 2 * pad, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y + pad, x + pad) = img.at(c, y, x);
  return out;
}

Image select_channels(const Image& img, int first, int count) {
  require(first >= 0 && count >= 1 && first + count <= img.channels(), "channel range out of bounds");
  std::vector<double> data(img.data().begin() + std::ptrdiff_t(first * img.plane_size()),
                           img.data().begin() + std::ptrdiff_t((first + count) * img.plane_size()));
  return Image(img.width(), img.height(), count, std::move(data));
}

Image concat_channels(const Image& a, const Image& b) {
  require(a.width() == b.width() && a.height() == b.height(), "concat spatial dims differ");
  std::vector<double> data = a.data();
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Image(a.width(), a.height(), a.channels() + b.channels(), std::move(data));
}

Image to_luma(const Image& img) {
  if (img.channels() == 1) return img;
  require(img.channels() == 3, "luma needs 1 or 3 channels");
  Image out(img.width(), img.height(), 1);
  constexpr double w[3] = {0.299, 0.587, 0.114};
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < img.plane_size(); ++i) out[i] += w[c] * img.plane(c)[i];
  return out;
}

Image resize_bicubic(const Image& img, int new_width, int new_height) {
  require(new_width >= 1 && new_height >= 1, "resize target must be positive");
  if (new_width == img.width() && new_height == img.height()) return img;
  auto weights = [](int src_n, int dst_n) {
    // For each destination sample: 4 source indices and weights (clamped border).
    std::vector<std::pair<int, double>> w(std::size_t(dst_n) * 4);
    const double scale = double(src_n) / dst_n;
    for (int d = 0; d < dst_n; ++d) {
      const double s = (d + 0.5) * scale - 0.5;
      const int base = int(std::floor(s)) - 1;
      double total = 0.0;
      for (int k = 0; k < 4; ++k) {
        const double wk = cubic(s - (base + k));
        w[std::size_t(d) * 4 + k] = {clamp_index(base + k, src_n), wk};
        total += wk;
      }
      for (int k = 0; k < 4; ++k) w[std::size_t(d) * 4 + k].second /= total;
    }
    return w;
  };
  const auto wx = weights(img.width(), new_width);
  const auto wy = weights(img.height(), new_height);
  Image tmp(new_width, img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < new_width; ++x) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          const auto& [i, w] = wx[std::size_t(x) * 4 + k];
          acc += w * img.at(c, y, i);
        }
        tmp.at(c, y, x) = acc;
      }
  Image out(new_width, new_height, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < new_height; ++y)
      for (int x = 0; x < new_width; ++x) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          const auto& [i, w] = wy[std::size_t(y) * 4 + k];
          acc += w * tmp.at(c, i, x);
        }
        out.at(c, y, x) = acc;
      }
  return out;
}

Image area_downscale(const Image& img, int factor) {
  require(factor >= 1, "factor must be >= 1");
  require(img.width() % factor == 0 && img.height() % factor == 0, "dims not divisible by factor");
  if (factor == 1) return img;
  Image out(img.width() / factor, img.height() / factor, img.channels());
  const double inv = 1.0 / (factor * factor);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y / factor, x / factor) += inv * img.at(c, y, x);
  return out;
}

}  // namespace cemx
