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

#include <fftw3.h>

#include <mutex>

#include "cemx/image.hpp"

namespace cemx {

namespace {

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

ComplexGrid transform(const ComplexGrid& in, int sign) {
  ComplexGrid out(in.rows, in.cols);
  if (in.data.empty()) return out;
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data.data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(plan_mutex());
    plan = fftw_plan_dft_2d(in.rows, in.cols, src, dst, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

}  // namespace

ComplexGrid fft2(const ComplexGrid& grid) { return transform(grid, FFTW_FORWARD); }

ComplexGrid ifft2(const ComplexGrid& grid) {
  ComplexGrid out = transform(grid, FFTW_BACKWARD);
  const double n = double(grid.rows) * grid.cols;
  for (auto& v : out.data) v /= n;
  return out;
}

}  // namespace cemx
