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

#include <cstdint>
#include <functional>
#include <vector>

#include "cemx/generator.hpp"
#include "cemx/image.hpp"
#include "cemx/kernel.hpp"
#include "cemx/losses.hpp"

namespace cemx {

// Desk-scale adversarial training of the toy generator behind the
// consistency layer.
struct TrainOptions {
  int factor = 2;
  int crop = 16;          // HR crop side, a multiple of factor
  int batch = 4;
  int steps = 20;         // generator steps
  int features = 8;
  double gen_lr = 1e-3;   // Adam
  double critic_lr = 0.05;
  int max_critic_batches = 200;  // per generator step; the step is skipped when exhausted
  int map_iters = 10;
  LossWeights weights;
  PercentileCalibration calibration;
  std::uint64_t seed = 1;
};

struct TrainStep {
  int critic_batches = 0;
  bool generator_step = false;  // false when credibility was never established
  LossComponents losses;        // batch means, measured before the update
  double total = 0.0;
};

struct TrainResult {
  GeneratorParams params;
  LinearCritic critic;
  std::vector<TrainStep> steps;
  std::vector<bool> critic_outcomes;  // every critic batch, in order
};

// Random side x side crops with offsets on multiples of align, so that
// crops of an HR image line up with its LR grid.
std::vector<Image> sample_crops(const std::vector<Image>& images, int side, int count, std::uint64_t seed,
                                int align = 1);

struct BatchSample {
  Image x;         // HR crop
  Image y;         // its degradation
  Image z_struct;  // spatially uniform control from (l1, l2, theta)
  Image z_map;     // frozen minimizer of the map term
  double l1 = 0.0, l2 = 0.0, theta = 0.0;
};

struct GeneratorLoss {
  ad::NodeId total = 0;
  ad::NodeId adv = 0, range = 0, structure = 0, map = 0;
  // Every generator evaluation records its own weight leaves; the gradient
  // of a weight is the sum over these.
  std::vector<GeneratorNodes> calls;
};

// Batch mean of adv + w.range * range + w.structure * struct + w.map * map.
GeneratorLoss generator_loss(ad::Tape& t, const GeneratorParams& params, const std::vector<BatchSample>& batch,
                             const LinearCritic& critic, const CemHandle& op, const LossWeights& w,
                             const PercentileCalibration& cal);
// Gradients per layer, summed over the loss's generator calls, after t.backward(loss.total).
void accumulate_param_grads(const ad::Tape& t, const GeneratorLoss& loss, std::vector<Image>& dw, std::vector<Image>& db);

TrainResult train_toy(const std::vector<Image>& images, const Kernel& h, const TrainOptions& opts,
                      const std::function<void(int, const TrainStep&)>& on_step = {});

}  // namespace cemx
