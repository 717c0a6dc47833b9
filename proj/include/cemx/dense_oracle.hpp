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

#include <Eigen/Dense>

#include "cemx/image.hpp"
#include "cemx/kernel.hpp"

namespace cemx {

// Explicit matrices for small periodic problems; the reference the
// convolutional operator is checked against.
struct DenseOracle {
  static constexpr int kMaxHrSide = 16;

  int factor = 1;
  int hr_width = 0;
  int hr_height = 0;
  Eigen::MatrixXd H;        // LR pixels x HR pixels
  Eigen::MatrixXd back;     // H^T (H H^T)^-1
  Eigen::MatrixXd p_perp;   // H^T (H H^T)^-1 H
  Eigen::MatrixXd p_null;   // I - p_perp

  // Single-channel helpers; images are flattened row-major.
  Image apply(const Image& x_inc, const Image& y) const;
  Image project_nullspace(const Image& u) const;
  Image degrade(const Image& x) const;
  long rank() const;
};

DenseOracle build_dense_oracle(const Kernel& h, int factor, int hr_width, int hr_height);

}  // namespace cemx
