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

#include <deque>
#include <string>
#include <vector>

#include "cemx/cem.hpp"
#include "cemx/generator.hpp"
#include "cemx/image.hpp"
#include "cemx/optim.hpp"
#include "cemx/tape.hpp"

namespace cemx {

struct LossWeights {
  double range = 5000.0;
  double structure = 1.0;
  double map = 100.0;
  double gp = 10.0;
  void validate() const;  // InvalidParam on negative weights
};

struct StructureTensor {
  double s11 = 0.0;
  double s12 = 0.0;
  double s22 = 0.0;
};

struct PercentileRange {
  double p5 = 0.0;
  double p95 = 0.0;
};

struct PercentileCalibration {
  PercentileRange s11{-1.0, 1.0};
  PercentileRange s12{-1.0, 1.0};
  PercentileRange s22{-1.0, 1.0};
};

// Product: off-diagonal l1*l2*sin*cos. Eigen: R(theta) diag(l1, l2) R(theta)^T.
enum class ComposeMode { Product, Eigen };

// Mean absolute excess outside [0,1].
double range_loss(const Image& x);
ad::NodeId range_loss(ad::Tape& t, ad::NodeId x);

// Luma for 3-channel input, identity for 1 channel.
ad::NodeId luma(ad::Tape& t, ad::NodeId x);
// Central differences with replicate boundary; gx is horizontal.
Image grad_x(const Image& plane);
Image grad_y(const Image& plane);

// Mask-weighted sum of gradient outer products over the luma of x.
StructureTensor compute_St(const Image& x, const RegionMask& region);
StructureTensor compute_St(const Image& x);  // whole image
struct TensorNodes {
  ad::NodeId s11, s12, s22;
};
TensorNodes compute_St(ad::Tape& t, ad::NodeId x, const RegionMask& region);

StructureTensor compose_Sd(double l1, double l2, double theta, ComposeMode mode = ComposeMode::Product);
// Sum over pixels of |gx * gy| on the luma of x, floored at 1e-12.
double normalization_divisor(const Image& x);
StructureTensor normalize_St(const StructureTensor& s, const Image& x);
StructureTensor adjust_Sd(const StructureTensor& sd, const PercentileCalibration& cal);

double struct_loss(const Image& x_hat, const Image& x, double l1, double l2, double theta,
                   const PercentileCalibration& cal, ComposeMode mode = ComposeMode::Product);
ad::NodeId struct_loss(ad::Tape& t, ad::NodeId x_hat, const Image& x, double l1, double l2, double theta,
                       const PercentileCalibration& cal, ComposeMode mode = ComposeMode::Product);

// Linear interpolation between order statistics (index p * (n - 1)).
double percentile(std::vector<double> values, double p);
PercentileCalibration calibrate_percentiles(const std::vector<StructureTensor>& normalized);
// Normalized whole-image tensors of each image.
PercentileCalibration calibrate_percentiles(const std::vector<Image>& images);
std::string calibration_to_json(const PercentileCalibration& cal);
PercentileCalibration calibration_from_json(const std::string& text);

struct MapResult {
  Image z;
  double value = 0.0;
  std::vector<double> values;  // value at start, then after each accepted step
};

// Backtracking descent whose trial step is 1.5 Polyak steps toward the
// known lower bound 0 of an L1 objective.
DescentOptions map_descent_options();

// min_z mean |psi(y,z) - x| by backtracking gradient descent from z0.
MapResult map_loss(const GeneratorParams& params, const Image& y, const Image& x, const CemHandle& op,
                   const Image& z0, int iters = 10, DescentOptions opts = map_descent_options());
// Same over the direct parameterization, whose latent is the candidate n.
MapResult map_loss_direct(const Image& y, const Image& x, const CemHandle& op, const Image& n0, int iters,
                          DescentOptions opts = map_descent_options());

// Linear critic D(x) = <w, x> + b.
struct LinearCritic {
  Image w;
  double b = 0.0;
  double operator()(const Image& x) const { return dot(w, x) + b; }
};

struct CriticLosses {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double penalty = 0.0;
};

// The gradient of a linear critic is w everywhere, so the penalty does not
// depend on the interpolate.
CriticLosses critic_losses(const LinearCritic& critic, const Image& real, const Image& fake, double lambda_gp);
CriticLosses critic_losses(const LinearCritic& critic, const std::vector<Image>& real,
                           const std::vector<Image>& fake, double lambda_gp);

constexpr std::size_t kCredibilityWindow = 10;
bool credibility_gate(const std::deque<bool>& history);
bool credibility_gate(const std::vector<bool>& history);

struct LossComponents {
  double adv = 0.0;
  double range = 0.0;
  double structure = 0.0;
  double map = 0.0;
};
double total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace cemx
