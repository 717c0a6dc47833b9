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

#include <functional>
#include <vector>

#include "cemx/image.hpp"
#include "cemx/tape.hpp"

namespace cemx {

// A scalar function of one latent raster, recorded once and replayed with
// new latent values.
class TapeObjective {
 public:
  using Builder = std::function<ad::NodeId(ad::Tape&, ad::NodeId latent)>;

  TapeObjective(const Image& latent0, const Builder& build);

  double value(const Image& latent);
  double value_and_grad(const Image& latent, Image& grad);
  Image grad_at_last();  // gradient at the latent of the last evaluation
  ad::Tape& tape() noexcept { return tape_; }
  ad::NodeId latent_node() const noexcept { return leaf_; }
  ad::NodeId root() const noexcept { return root_; }

 private:
  ad::Tape tape_;
  ad::NodeId leaf_;
  ad::NodeId root_;
};

enum class StepRule { Backtracking, Adam };

struct DescentOptions {
  int steps = 100;
  double step = 1.0;         // first trial step
  double grow = 2.0;         // trial step multiplier after an accepted step
  int max_halvings = 40;
  bool polyak = false;       // trial step polyak_scale * (f - lower_bound) / |g|^2
  double polyak_scale = 1.0;
  double lower_bound = 0.0;
  const Image* mask = nullptr;  // 1-channel; the gradient is multiplied by it per channel
  StepRule rule = StepRule::Backtracking;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  // Called after every accepted step; returning false stops the loop.
  std::function<bool(int step, double value)> on_step;
};

struct DescentResult {
  Image latent;
  double initial = 0.0;
  std::vector<double> trace;  // objective after each accepted step
  int rejected = 0;
  bool stalled = false;       // no decrease found within max_halvings
  double last_step = 0.0;

  double final_value() const { return trace.empty() ? initial : trace.back(); }
};

// Gradient descent. Backtracking halves the trial step until the objective
// decreases, so the trace is non-increasing. Adam takes every step and
// offers no such guarantee.
DescentResult descend(TapeObjective& f, Image latent, const DescentOptions& opts);

}  // namespace cemx
