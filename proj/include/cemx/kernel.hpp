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

#include <complex>
#include <string>
#include <vector>

#include "cemx/image.hpp"

namespace cemx {

// Blur kernel with odd dims and a centered anchor. Even-sized input is
// zero-padded by one row/column on the high side.
class Kernel {
 public:
  Kernel();  // 1x1 delta
  Kernel(int rows, int cols, std::vector<double> taps, std::string label = {});

  static Kernel delta() { return Kernel(); }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int center_row() const noexcept { return rows_ / 2; }
  int center_col() const noexcept { return cols_ / 2; }
  double at(int r, int c) const { return taps_[std::size_t(r) * cols_ + c]; }
  const std::vector<double>& taps() const noexcept { return taps_; }
  const std::string& label() const noexcept { return label_; }
  void set_label(std::string label) { label_ = std::move(label); }

  double sum() const;
  Kernel normalized() const;  // unit tap sum; throws SingularKernel on a zero sum
  Kernel scaled(double s) const;

 private:
  int rows_ = 1;
  int cols_ = 1;
  std::vector<double> taps_{1.0};
  std::string label_ = "delta";
};

Kernel mirror(const Kernel& h);

// Keys cubic (a = -0.5) anti-aliasing kernel for an integer factor, centered
// on the retained sample: taps cubic(d / factor) for |d| < 2 * factor.
Kernel bicubic_kernel(int factor);
// Interpolation taps for zero-insertion upsampling (bicubic_kernel scaled by factor^2).
Kernel bicubic_interp_kernel(int factor);
Kernel gaussian_kernel(int size, double sigma);
Kernel box_kernel(int size);

Kernel parse_kernel_json(const std::string& text, bool normalize = true);
std::string kernel_to_json(const Kernel& k);
Kernel load_kernel(const std::string& path, bool normalize = true);
void save_kernel(const Kernel& k, const std::string& path);

// Circular autocorrelation (h * mirror(h)) wrapped on the HR grid
// (grid_rows * factor) x (grid_cols * factor), then decimated by factor.
// Result is a single-plane grid_cols x grid_rows image with the origin at (0,0).
Image compose_downsampled(const Kernel& h, int factor, int grid_rows, int grid_cols);

// Spectral inverse of compose_downsampled on the LR grid.
struct InvFilter {
  int grid_rows = 0;
  int grid_cols = 0;
  ComplexGrid spectrum;
  double eps = 0.0;          // absolute floor actually applied
  int floored_bins = 0;
  double min_magnitude = 0.0;
  double max_magnitude = 0.0;

  static InvFilter identity(int rows, int cols);
};

// eps is relative to the largest |F[g]|.
InvFilter invert_composed(const Kernel& h, int factor, int grid_rows, int grid_cols,
                          double eps = 1e-10);
Image apply_inv(const InvFilter& f, const Image& img);
// Circular convolution of each channel with a real filter given by its spectrum.
Image apply_spectrum(const ComplexGrid& spectrum, const Image& img);

}  // namespace cemx
