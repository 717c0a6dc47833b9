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

#include "cemx/dense_oracle.hpp"

#include "cemx/error.hpp"

namespace cemx {

namespace {

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

Eigen::VectorXd flatten(const Image& img) {
  if (img.channels() != 1) throw Error(ErrorCode::InvalidDims, "dense oracle handles one channel");
  return Eigen::Map<const Eigen::VectorXd>(img.data().data(), Eigen::Index(img.size()));
}

Image unflatten(const Eigen::VectorXd& v, int w, int h) {
  return Image(w, h, 1, std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

DenseOracle build_dense_oracle(const Kernel& h, int factor, int hr_width, int hr_height) {
  if (hr_width > DenseOracle::kMaxHrSide || hr_height > DenseOracle::kMaxHrSide)
    throw Error(ErrorCode::OracleTooLarge, "dense oracle limited to 16x16 HR");
  if (factor < 1 || hr_width % factor || hr_height % factor)
    throw Error(ErrorCode::InvalidDims, "HR dims not divisible by scale");
  DenseOracle o;
  o.factor = factor;
  o.hr_width = hr_width;
  o.hr_height = hr_height;
  const int lw = hr_width / factor, lh = hr_height / factor;
  const int n = hr_width * hr_height;
  o.H = Eigen::MatrixXd::Zero(lw * lh, n);
  for (int py = 0; py < lh; ++py)
    for (int px = 0; px < lw; ++px) {
      const int row = py * lw + px;
      for (int i = 0; i < h.rows(); ++i)
        for (int j = 0; j < h.cols(); ++j) {
          const int sy = wrap(factor * py - (i - h.center_row()), hr_height);
          const int sx = wrap(factor * px - (j - h.center_col()), hr_width);
          o.H(row, sy * hr_width + sx) += h.at(i, j);
        }
    }
  const Eigen::MatrixXd gram = o.H * o.H.transpose();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(gram);
  o.back = lu.solve(o.H).transpose();
  o.p_perp = o.back * o.H;
  o.p_null = Eigen::MatrixXd::Identity(n, n) - o.p_perp;
  return o;
}

Image DenseOracle::apply(const Image& x_inc, const Image& y) const {
  const Eigen::VectorXd out = p_null * flatten(x_inc) + back * flatten(y);
  return unflatten(out, hr_width, hr_height);
}

Image DenseOracle::project_nullspace(const Image& u) const {
  return unflatten(p_null * flatten(u), hr_width, hr_height);
}

Image DenseOracle::degrade(const Image& x) const {
  return unflatten(H * flatten(x), hr_width / factor, hr_height / factor);
}

long DenseOracle::rank() const { return long(Eigen::FullPivLU<Eigen::MatrixXd>(H).rank()); }

}  // namespace cemx
