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

#include "cemx/generator.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "cemx/error.hpp"
#include "text_io.hpp"

namespace cemx {

namespace {

Image random_taps(int size, int out, int in, int data_in, double scale, bool zero_z, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Image w(size, size, out * in);
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < in; ++i) {
      const bool z_tap = i >= data_in;
      for (auto& v : w.plane(o * in + i)) v = (z_tap && zero_z) ? 0.0 : dist(rng);
    }
  return w;
}

Image delta_taps(int size, int out, int in) {
  Image w(size, size, out * in);
  for (int o = 0; o < out && o < in; ++o) w.at(o * in + o, size / 2, size / 2) = 1.0;
  return w;
}

void check_inputs(const GeneratorParams& params, const Image& y, const Image& z, const CemOperator& op) {
  const int a = params.factor;
  if (op.factor() != a) throw Error(ErrorCode::InvalidDims, "generator and operator scale factors differ");
  if (y.channels() != params.channels) throw Error(ErrorCode::InvalidDims, "y channel count differs from the generator's");
  if (z.channels() != kControlChannels) throw Error(ErrorCode::InvalidDims, "control signal must have 3 channels");
  if (z.width() != a * y.width() || z.height() != a * y.height())
    throw Error(ErrorCode::InvalidDims, "control signal dims must be factor * y dims");
  if (z.width() != op.hr_width() || z.height() != op.hr_height())
    throw Error(ErrorCode::InvalidDims, "control signal dims differ from the operator's HR dims");
}

}  // namespace

ControlSignal zero_control(int width, int height) { return Image(width, height, kControlChannels, 0.0); }

void GeneratorParams::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidParam, "generator: " + m); };
  if (factor < 1) bad("factor must be >= 1");
  if (channels < 1) bad("channels must be >= 1");
  if (!std::isfinite(slope)) bad("slope must be finite");
  if (layers.empty()) bad("no layers");
  int prev = channels;
  bool seen_hr = false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string tag = "layer " + std::to_string(l) + ": ";
    if (L.in_channels != prev + kControlChannels) bad(tag + "input channels must be previous output + 3");
    if (L.out_channels < 1) bad(tag + "output channels must be >= 1");
    if (L.size < 1 || L.size % 2 == 0) bad(tag + "tap size must be odd");
    if (L.low_res && seen_hr) bad(tag + "low-res layers must precede full-res layers");
    seen_hr = seen_hr || !L.low_res;
    if (L.weights.width() != L.size || L.weights.height() != L.size ||
        L.weights.channels() != L.in_channels * L.out_channels)
      bad(tag + "weight raster has the wrong shape");
    if (L.bias.width() != 1 || L.bias.height() != 1 || L.bias.channels() != L.out_channels)
      bad(tag + "bias has the wrong shape");
    prev = L.out_channels;
  }
  if (prev != channels) bad("last layer must output the image channel count");
}

GeneratorParams GeneratorParams::toy(int factor, int channels, std::uint64_t seed, bool zero_z_weights, int features) {
  GeneratorParams p;
  p.factor = factor;
  p.channels = channels;
  p.bicubic_skip = true;
  std::mt19937_64 rng(seed);
  const int size = 3;
  auto make = [&](int in_data, int out, bool low_res, bool leaky, double gain) {
    ConvLayerParams L;
    L.in_channels = in_data + kControlChannels;
    L.out_channels = out;
    L.size = size;
    L.low_res = low_res;
    L.leaky = leaky;
    const double scale = gain * std::sqrt(3.0 / (double(L.in_channels) * size * size));
    L.weights = random_taps(size, out, L.in_channels, in_data, scale, zero_z_weights, rng);
    L.bias = Image(1, 1, out, 0.0);
    return L;
  };
  p.layers.push_back(make(channels, features, true, true, 1.0));
  p.layers.push_back(make(features, features, false, true, 1.0));
  p.layers.push_back(make(features, channels, false, false, 0.1));
  return p;
}

GeneratorParams GeneratorParams::identity(int factor, int channels) {
  GeneratorParams p;
  p.factor = factor;
  p.channels = channels;
  p.bicubic_skip = false;
  for (int l = 0; l < 3; ++l) {
    ConvLayerParams L;
    L.in_channels = channels + kControlChannels;
    L.out_channels = channels;
    L.size = 3;
    L.low_res = l == 0;
    L.leaky = false;
    L.weights = delta_taps(3, channels, L.in_channels);
    L.bias = Image(1, 1, channels, 0.0);
    p.layers.push_back(std::move(L));
  }
  return p;
}

Image bicubic_upsample(const Image& y, int factor) {
  if (factor == 1) return y;
  return conv2d(upsample(y, factor), bicubic_interp_kernel(factor), BoundaryMode::Periodic);
}

GeneratorOutput generate(const GeneratorParams& params, const Image& y, const ControlSignal& z, const CemOperator& op) {
  params.validate();
  check_inputs(params, y, z, op);
  const int a = params.factor;
  const Image z_lr = area_downscale(z, a);
  Image h = y;
  bool at_lr = true;
  for (const auto& L : params.layers) {
    if (!L.low_res && at_lr) {
      h = bicubic_upsample(h, a);
      at_lr = false;
    }
    h = ad::conv_layer_apply(concat_channels(h, L.low_res ? z_lr : z), L.weights, L.bias);
    if (L.leaky)
      for (auto& v : h.data()) v = v > 0 ? v : params.slope * v;
  }
  if (at_lr) h = bicubic_upsample(h, a);
  if (params.bicubic_skip) add_inplace(h, bicubic_upsample(y, a));
  GeneratorOutput out;
  out.x_hat = cem_apply(op, h, y);
  out.x_inc = std::move(h);
  return out;
}

GeneratorNodes generate_on_tape(const GeneratorParams& params, const Image& y, ad::NodeId z, const CemHandle& op,
                                ad::Tape& tape, bool params_as_leaves) {
  params.validate();
  if (!op) throw Error(ErrorCode::InvalidParam, "generate_on_tape: null operator");
  check_inputs(params, y, tape.value(z), *op);
  const int a = params.factor;
  const Kernel up = bicubic_interp_kernel(a);
  auto upsample_node = [&](ad::NodeId n) {
    return a == 1 ? n : tape.conv2d(tape.upsample(n, a), up, BoundaryMode::Periodic);
  };

  GeneratorNodes out;
  const ad::NodeId y_node = tape.constant(y);
  const ad::NodeId z_lr = tape.area_downscale(z, a);
  ad::NodeId h = y_node;
  bool at_lr = true;
  for (const auto& L : params.layers) {
    if (!L.low_res && at_lr) {
      h = upsample_node(h);
      at_lr = false;
    }
    const ad::NodeId w = params_as_leaves ? tape.leaf(L.weights) : tape.constant(L.weights);
    const ad::NodeId b = params_as_leaves ? tape.leaf(L.bias) : tape.constant(L.bias);
    out.weights.push_back(w);
    out.biases.push_back(b);
    h = tape.conv_layer(tape.concat(h, L.low_res ? z_lr : z), w, b);
    if (L.leaky) h = tape.leaky_relu(h, params.slope);
  }
  if (at_lr) h = upsample_node(h);
  if (params.bicubic_skip) h = tape.add(h, upsample_node(y_node));
  out.x_inc = h;
  out.x_hat = tape.add(tape.cem_linear(h, op), tape.constant(cem_offset(*op, y)));
  return out;
}

Image direct_param(const Image& y, const Image& n, const CemOperator& op) { return cem_apply(op, n, y); }

std::string generator_to_json(const GeneratorParams& params) {
  params.validate();
  nlohmann::json doc;
  doc["format"] = "cemx-generator";
  doc["version"] = 1;
  doc["factor"] = params.factor;
  doc["channels"] = params.channels;
  doc["slope"] = params.slope;
  doc["bicubic_skip"] = params.bicubic_skip;
  doc["layers"] = nlohmann::json::array();
  for (const auto& L : params.layers) {
    doc["layers"].push_back({{"in", L.in_channels},
                             {"out", L.out_channels},
                             {"size", L.size},
                             {"low_res", L.low_res},
                             {"leaky", L.leaky},
                             {"weights", L.weights.data()},
                             {"bias", L.bias.data()}});
  }
  return doc.dump();
}

GeneratorParams generator_from_json(const std::string& text) {
  GeneratorParams p;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.value("format", "") != "cemx-generator")
      throw Error(ErrorCode::InvalidParam, "not a cemx generator weight file");
    p.factor = doc.at("factor").get<int>();
    p.channels = doc.at("channels").get<int>();
    p.slope = doc.value("slope", 0.2);
    p.bicubic_skip = doc.value("bicubic_skip", true);
    for (const auto& l : doc.at("layers")) {
      ConvLayerParams L;
      L.in_channels = l.at("in").get<int>();
      L.out_channels = l.at("out").get<int>();
      L.size = l.at("size").get<int>();
      L.low_res = l.value("low_res", false);
      L.leaky = l.value("leaky", true);
      auto w = l.at("weights").get<std::vector<double>>();
      auto b = l.at("bias").get<std::vector<double>>();
      if (L.size < 1 || L.in_channels < 1 || L.out_channels < 1 ||
          w.size() != std::size_t(L.size) * L.size * L.in_channels * L.out_channels ||
          b.size() != std::size_t(L.out_channels))
        throw Error(ErrorCode::InvalidParam, "layer arrays do not match the declared dims");
      L.weights = Image(L.size, L.size, L.in_channels * L.out_channels, std::move(w));
      L.bias = Image(1, 1, L.out_channels, std::move(b));
      p.layers.push_back(std::move(L));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("generator weights: ") + e.what());
  }
  p.validate();
  return p;
}

GeneratorParams load_generator(const std::string& path) { return generator_from_json(detail::read_file(path)); }

void save_generator(const GeneratorParams& params, const std::string& path) {
  detail::write_file(path, generator_to_json(params) + "\n");
}

}  // namespace cemx
