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

// Shared helpers for the test binaries: seeded random rasters and
// brute-force references that never call into the code under test.

#include <cmath>
#include <complex>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "cemx/image.hpp"
#include "cemx/kernel.hpp"

namespace testing {

inline cemx::Image random_image(int w, int h, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  cemx::Image img(w, h, c);
  for (auto& v : img.data()) v = dist(rng);
  return img;
}

inline cemx::Kernel random_kernel(int rows, int cols, std::uint64_t seed, bool unit_sum = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  std::vector<double> taps(std::size_t(rows) * cols);
  for (auto& t : taps) t = dist(rng);
  cemx::Kernel k(rows, cols, taps, "random");
  return unit_sum ? k.normalized() : k;
}

// Circular convolution by the definition: out[y,x] = sum_{i,j} h[i,j] img[y-(i-ci), x-(j-cj)].
inline cemx::Image brute_circular_conv(const cemx::Image& img, const cemx::Kernel& h) {
  cemx::Image out(img.width(), img.height(), img.channels());
  const int W = img.width(), H = img.height();
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = 0; i < h.rows(); ++i)
          for (int j = 0; j < h.cols(); ++j) {
            int sy = ((y - (i - h.rows() / 2)) % H + H) % H;
            int sx = ((x - (j - h.cols() / 2)) % W + W) % W;
            acc += h.at(i, j) * img.at(c, sy, sx);
          }
        out.at(c, y, x) = acc;
      }
  return out;
}

// O(N^2) DFT straight from the sum.
inline cemx::ComplexGrid direct_dft(const cemx::ComplexGrid& g, int sign = -1) {
  cemx::ComplexGrid out(g.rows, g.cols);
  const double pi = std::acos(-1.0);
  for (int u = 0; u < g.rows; ++u)
    for (int v = 0; v < g.cols; ++v) {
      std::complex<double> acc = 0.0;
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) {
          const double ang = sign * 2.0 * pi * (double(u) * r / g.rows + double(v) * c / g.cols);
          acc += g(r, c) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      out(u, v) = acc;
    }
  return out;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cemx_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
