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
#include <string>
#include <vector>

#include "cemx/cem.hpp"
#include "cemx/image.hpp"
#include "cemx/tape.hpp"

namespace cemx {

// HR-sized 3-channel raster steering the generator; values nominally in [-1,1].
using ControlSignal = Image;
constexpr int kControlChannels = 3;

ControlSignal zero_control(int width, int height);

struct ConvLayerParams {
  int in_channels = 0;   // includes the 3 concatenated z channels
  int out_channels = 0;
  int size = 3;          // odd square taps
  bool low_res = false;  // runs on the LR grid (z is area-downscaled to match)
  bool leaky = true;
  Image weights;         // size x size x (out*in), plane o*in + i
  Image bias;            // 1 x 1 x out
};

// Toy conv stack: the first layer(s) flagged low_res run on y's grid, the
// features are then upsampled with the interpolating bicubic filter and the
// remaining layers run at HR. z is concatenated to every layer's input.
struct GeneratorParams {
  int factor = 1;
  int channels = 3;  // image channels of y and of the output
  double slope = 0.2;
  bool bicubic_skip = true;
  std::vector<ConvLayerParams> layers;

  void validate() const;  // InvalidParam on inconsistent shapes

  // 3 layers, 16 features, leaky relu, bicubic skip. z taps are drawn like
  // the others unless zero_z_weights is set.
  static GeneratorParams toy(int factor, int channels, std::uint64_t seed, bool zero_z_weights = false,
                             int features = 16);
  // Delta taps on the image channels, zero z taps, no nonlinearity, no skip:
  // x_inc is exactly the bicubic upsample of y.
  static GeneratorParams identity(int factor, int channels);
};

struct GeneratorOutput {
  Image x_inc;
  Image x_hat;
};

// Zero insertion followed by the interpolating bicubic filter (periodic), so
// retained samples of the result equal y.
Image bicubic_upsample(const Image& y, int factor);

GeneratorOutput generate(const GeneratorParams& params, const Image& y, const ControlSignal& z, const CemOperator& op);

struct GeneratorNodes {
  ad::NodeId x_inc = 0;
  ad::NodeId x_hat = 0;
  std::vector<ad::NodeId> weights;  // one per layer; leaves when params_as_leaves
  std::vector<ad::NodeId> biases;
};

GeneratorNodes generate_on_tape(const GeneratorParams& params, const Image& y, ad::NodeId z, const CemHandle& op,
                                ad::Tape& tape, bool params_as_leaves = false);

// Network-free exploration: the latent n is the candidate itself.
Image direct_param(const Image& y, const Image& n, const CemOperator& op);

std::string generator_to_json(const GeneratorParams& params);
GeneratorParams generator_from_json(const std::string& text);
GeneratorParams load_generator(const std::string& path);
void save_generator(const GeneratorParams& params, const std::string& path);

}  // namespace cemx
