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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cemx {

// Planar raster of doubles: sample (c, y, x) lives at data[(c * height + y) * width + x].
// Values are nominally in [0,1] but nothing clips until an image is encoded.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);
  Image(int width, int height, int channels, std::vector<double> data);

  static Image scalar(double v) { return Image(1, 1, 1, v); }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept { return std::size_t(width_) * height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Image& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  double& at(int c, int y, int x) { return data_[(std::size_t(c) * height_ + y) * width_ + x]; }
  double at(int c, int y, int x) const { return data_[(std::size_t(c) * height_ + y) * width_ + x]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  double value() const;  // the single sample of a 1x1x1 image

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Per-pixel weights in [0,1]; a single-channel image with the target's spatial dims.
using RegionMask = Image;

enum class BoundaryMode { Periodic, Replicate };

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

class Kernel;

// Arithmetic helpers used throughout.
Image operator+(const Image& a, const Image& b);
Image operator-(const Image& a, const Image& b);
Image operator*(double s, const Image& a);
void add_inplace(Image& a, const Image& b, double scale = 1.0);
double dot(const Image& a, const Image& b);
double sum(const Image& a);
double norm2(const Image& a);  // squared L2
double linf(const Image& a);
double max_abs_diff(const Image& a, const Image& b);
Image clip01(const Image& a);

// Same-size convolution; out[p] = sum_d h[c + d] * img[p - d], per channel.
Image conv2d(const Image& img, const Kernel& taps, BoundaryMode mode);
// Exact adjoint of conv2d (equals conv2d with the mirrored kernel under Periodic).
Image conv2d_adjoint(const Image& img, const Kernel& taps, BoundaryMode mode);
Image downsample(const Image& img, int factor);
Image upsample(const Image& img, int factor);

Image crop(const Image& img, Rect r);
Image pad_replicate(const Image& img, int pad);
// Transpose of pad_replicate: border samples are folded back onto the edge they copied.
Image pad_replicate_adjoint(const Image& padded, int pad);
Image embed(const Image& img, int pad);  // zero border
Image select_channels(const Image& img, int first, int count);
Image concat_channels(const Image& a, const Image& b);
Image to_luma(const Image& img);
Image resize_bicubic(const Image& img, int new_width, int new_height);
Image area_downscale(const Image& img, int factor);

// Complex raster used for spectral work; row-major, single plane.
struct ComplexGrid {
  int rows = 0;
  int cols = 0;
  std::vector<std::complex<double>> data;
  ComplexGrid() = default;
  ComplexGrid(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c) {}
  std::complex<double>& operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
  const std::complex<double>& operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }
};

ComplexGrid fft2(const ComplexGrid& grid);
ComplexGrid ifft2(const ComplexGrid& grid);  // normalized by 1/(rows*cols)

Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);
std::string encode_png(const Image& img);
Image decode_png(const std::string& bytes);
Image load_pgm(const std::string& path);
void save_pgm(const Image& img, const std::string& path);
// Lossless float64 raster: "CEMZ", u32 width, height, channels (little
// endian), then the planar samples as little-endian doubles.
Image load_raster(const std::string& path);
void save_raster(const Image& img, const std::string& path);
Image load_image(const std::string& path);  // dispatch on extension: .pgm, .cemz, else PNG
void save_image(const Image& img, const std::string& path);

}  // namespace cemx
