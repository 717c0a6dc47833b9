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

#include "cemx/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cemx/error.hpp"

namespace cemx {

namespace {

double keys_cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

}  // namespace

Kernel::Kernel() = default;

Kernel::Kernel(int rows, int cols, std::vector<double> taps, std::string label)
    : label_(std::move(label)) {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::KernelFormatError, "kernel dims must be positive");
  if (taps.size() != std::size_t(rows) * cols)
    throw Error(ErrorCode::KernelFormatError, "tap count does not match rows*cols");
  rows_ = rows | 1;
  cols_ = cols | 1;
  taps_.assign(std::size_t(rows_) * cols_, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) taps_[std::size_t(r) * cols_ + c] = taps[std::size_t(r) * cols + c];
}

double Kernel::sum() const {
  double s = 0.0;
  for (double t : taps_) s += t;
  return s;
}

Kernel Kernel::normalized() const {
  const double s = sum();
  if (s == 0.0) throw Error(ErrorCode::SingularKernel, "kernel taps sum to zero");
  return scaled(1.0 / s);
}

Kernel Kernel::scaled(double s) const {
  Kernel k = *this;
  for (auto& t : k.taps_) t *= s;
  return k;
}

Kernel mirror(const Kernel& h) {
  std::vector<double> taps(h.taps().rbegin(), h.taps().rend());
  return Kernel(h.rows(), h.cols(), std::move(taps), h.label().empty() ? "" : h.label() + "~");
}

Kernel bicubic_kernel(int factor) {
  if (factor < 1) throw Error(ErrorCode::InvalidParam, "factor must be >= 1");
  // cubic(+-2) = 0, so the outermost taps are dropped: 4 * factor - 1 per axis.
  const int n = 4 * factor - 1;
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = keys_cubic(double(i - (2 * factor - 1)) / factor);
  std::vector<double> taps(std::size_t(n) * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) taps[std::size_t(r) * n + c] = w[r] * w[c];
  return Kernel(n, n, std::move(taps), "bicubic_x" + std::to_string(factor)).normalized();
}

Kernel bicubic_interp_kernel(int factor) {
  return bicubic_kernel(factor).scaled(double(factor) * factor);
}

Kernel gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0 || sigma <= 0.0)
    throw Error(ErrorCode::InvalidParam, "gaussian needs odd size and positive sigma");
  const int c = size / 2;
  std::vector<double> taps(std::size_t(size) * size);
  for (int r = 0; r < size; ++r)
    for (int q = 0; q < size; ++q)
      taps[std::size_t(r) * size + q] =
          std::exp(-((r - c) * (r - c) + (q - c) * (q - c)) / (2.0 * sigma * sigma));
  std::ostringstream label;
  label << "gaussian_s" << sigma;
  return Kernel(size, size, std::move(taps), label.str()).normalized();
}

Kernel box_kernel(int size) {
  return Kernel(size, size, std::vector<double>(std::size_t(size) * size, 1.0), "box").normalized();
}

Kernel parse_kernel_json(const std::string& text, bool normalize) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::KernelFormatError, std::string("malformed kernel JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("rows") || !doc.contains("cols") || !doc.contains("taps"))
    throw Error(ErrorCode::KernelFormatError, "kernel JSON needs rows, cols and taps");
  std::vector<double> taps;
  int rows = 0, cols = 0;
  try {
    rows = doc.at("rows").get<int>();
    cols = doc.at("cols").get<int>();
    taps = doc.at("taps").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::KernelFormatError, std::string("bad kernel field: ") + e.what());
  }
  if (taps.empty()) throw Error(ErrorCode::KernelFormatError, "kernel has no taps");
  for (double t : taps)
    if (!std::isfinite(t)) throw Error(ErrorCode::KernelFormatError, "non-finite kernel tap");
  Kernel k(rows, cols, std::move(taps), doc.value("label", std::string("file")));
  // A zero-sum kernel cannot be normalized; it is kept as-is and rejected as
  // singular by whoever tries to invert it.
  if (normalize && k.sum() != 0.0) k = k.normalized();
  return k;
}

std::string kernel_to_json(const Kernel& k) {
  nlohmann::json doc;
  doc["rows"] = k.rows();
  doc["cols"] = k.cols();
  doc["taps"] = k.taps();
  if (!k.label().empty()) doc["label"] = k.label();
  return doc.dump();
}

Kernel load_kernel(const std::string& path, bool normalize) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open kernel '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kernel_json(ss.str(), normalize);
}

void save_kernel(const Kernel& k, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << kernel_to_json(k) << "\n";
}

Image compose_downsampled(const Kernel& h, int factor, int grid_rows, int grid_cols) {
  if (factor < 1 || grid_rows < 1 || grid_cols < 1)
    throw Error(ErrorCode::InvalidDims, "bad grid or factor");
  const int hr_rows = grid_rows * factor, hr_cols = grid_cols * factor;
  if (hr_rows < h.rows() || hr_cols < h.cols())
    throw Error(ErrorCode::InvalidDims, "grid smaller than kernel support");
  // a[d] = sum_t h[t] h[t - d], wrapped onto the HR torus.
  Image wrapped(hr_cols, hr_rows, 1);
  const int R = h.rows(), C = h.cols();
  for (int dr = -(R - 1); dr <= R - 1; ++dr) {
    for (int dc = -(C - 1); dc <= C - 1; ++dc) {
      double a = 0.0;
      for (int r = std::max(0, dr); r < std::min(R, R + dr); ++r)
        for (int c = std::max(0, dc); c < std::min(C, C + dc); ++c) a += h.at(r, c) * h.at(r - dr, c - dc);
      wrapped.at(0, wrap(dr, hr_rows), wrap(dc, hr_cols)) += a;
    }
  }
  return downsample(wrapped, factor);
}

InvFilter InvFilter::identity(int rows, int cols) {
  InvFilter f;
  f.grid_rows = rows;
  f.grid_cols = cols;
  f.spectrum = ComplexGrid(rows, cols);
  for (auto& v : f.spectrum.data) v = 1.0;
  f.min_magnitude = f.max_magnitude = 1.0;
  return f;
}

InvFilter invert_composed(const Kernel& h, int factor, int grid_rows, int grid_cols, double eps) {
  const Image g = compose_downsampled(h, factor, grid_rows, grid_cols);
  ComplexGrid grid(grid_rows, grid_cols);
  for (std::size_t i = 0; i < g.size(); ++i) grid.data[i] = g[i];
  ComplexGrid F = fft2(grid);
  double max_mag = 0.0;
  for (const auto& v : F.data) max_mag = std::max(max_mag, std::abs(v));
  if (!(max_mag > 0.0)) throw Error(ErrorCode::SingularKernel, "composed filter is identically zero");

  InvFilter f;
  f.grid_rows = grid_rows;
  f.grid_cols = grid_cols;
  f.eps = eps * max_mag;
  f.max_magnitude = max_mag;
  f.min_magnitude = max_mag;
  f.spectrum = ComplexGrid(grid_rows, grid_cols);
  for (std::size_t i = 0; i < F.data.size(); ++i) {
    // The autocorrelation spectrum is real; drop rounding leakage in the imaginary part.
    const double re = F.data[i].real();
    const double mag = std::abs(re);
    f.min_magnitude = std::min(f.min_magnitude, mag);
    if (mag < f.eps) {
      ++f.floored_bins;
      f.spectrum.data[i] = (re < 0.0 ? -1.0 : 1.0) / f.eps;
    } else {
      f.spectrum.data[i] = 1.0 / re;
    }
  }
  return f;
}

Image apply_spectrum(const ComplexGrid& spectrum, const Image& img) {
  if (img.height() != spectrum.rows || img.width() != spectrum.cols)
    throw Error(ErrorCode::InvalidDims, "image dims differ from filter grid");
  Image out(img.width(), img.height(), img.channels());
  ComplexGrid buf(spectrum.rows, spectrum.cols);
  for (int c = 0; c < img.channels(); ++c) {
    auto src = img.plane(c);
    for (std::size_t i = 0; i < src.size(); ++i) buf.data[i] = src[i];
    ComplexGrid F = fft2(buf);
    for (std::size_t i = 0; i < F.data.size(); ++i) F.data[i] *= spectrum.data[i];
    ComplexGrid back = ifft2(F);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = back.data[i].real();
  }
  return out;
}

Image apply_inv(const InvFilter& f, const Image& img) { return apply_spectrum(f.spectrum, img); }

}  // namespace cemx
