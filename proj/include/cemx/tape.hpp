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

#include <cstddef>
#include <functional>
#include <memory>
#include <variant>
#include <vector>
#include <deque>

#include "cemx/cem.hpp"
#include "cemx/image.hpp"
#include "cemx/kernel.hpp"

namespace cemx::ad {

using NodeId = std::size_t;

enum class Op {
  Constant,
  Leaf,
  Conv2d,
  ConvLayer,
  Downsample,
  Upsample,
  AreaDownscale,
  CemLinear,
  Add,
  AddN,
  Sub,
  Scale,
  Mul,
  LeakyRelu,
  Clip,
  Concat,
  Slice,
  Broadcast,
  ReduceSum,
  ReduceMean,
  Abs,
  Square,
  Sqrt,
  Reciprocal,
  MinSqDist,
  MinOf,
};

const char* op_name(Op op) noexcept;

// Periodic multi-channel convolution, the value computed by Tape::conv_layer.
Image conv_layer_apply(const Image& x, const Image& weights, const Image& bias);

struct ConvPayload {
  Kernel taps;
  BoundaryMode mode;
};
struct SliceSpec {
  int first_channel = 0;
  int channel_count = 0;
  Rect rect;
};
struct Shape {
  int width = 1;
  int height = 1;
  int channels = 1;
};
using PatchBank = std::shared_ptr<const std::vector<Image>>;

using Payload = std::variant<std::monostate, ConvPayload, int, double, CemHandle, SliceSpec, Shape, PatchBank>;

struct Node {
  Op op = Op::Constant;
  std::vector<NodeId> inputs;
  Payload payload;
  Image value;
  Image grad;
  bool needs_grad = false;
  std::size_t selected = 0;  // argmin chosen by the last forward of a min node
};

// Append-only reverse-mode graph over images. Nodes are evaluated when they
// are appended; forward() re-evaluates everything in append order after
// set_value() changed an input. A scalar is a 1x1x1 image.
class Tape {
 public:
  NodeId constant(Image v);
  NodeId leaf(Image v);

  NodeId conv2d(NodeId x, const Kernel& taps, BoundaryMode mode);
  // Periodic multi-channel convolution: weights hold cout*cin planes of
  // kh x kw taps (plane o*cin + i maps input i to output o); bias is 1x1xcout.
  NodeId conv_layer(NodeId x, NodeId weights, NodeId bias);
  NodeId downsample(NodeId x, int factor);
  NodeId upsample(NodeId x, int factor);
  NodeId area_downscale(NodeId x, int factor);
  NodeId cem_linear(NodeId x, CemHandle op);

  NodeId add(NodeId a, NodeId b);
  NodeId add_n(const std::vector<NodeId>& terms);
  NodeId sub(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId mul(NodeId a, NodeId b);
  NodeId leaky_relu(NodeId a, double slope = 0.2);
  // Clamp to [0,1]; the backward pass lets the gradient through where the
  // input lies inside [0,1] (boundary included) and blocks it outside.
  NodeId clip(NodeId a);
  NodeId concat(NodeId a, NodeId b);
  NodeId slice(NodeId a, SliceSpec spec);
  NodeId slice(NodeId a, Rect rect);
  NodeId broadcast(NodeId scalar, Shape shape);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId abs(NodeId a);
  NodeId square(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId reciprocal(NodeId a);
  // min over the bank of ||a - s||^2; differentiates through the argmin
  // picked at forward time, ties going to the lowest index.
  NodeId min_sq_dist(NodeId a, PatchBank bank);
  NodeId min_of(const std::vector<NodeId>& scalars);

  void set_value(NodeId id, Image v);
  void forward();
  void backward(NodeId root);

  const Image& value(NodeId id) const { return nodes_.at(id).value; }
  double scalar(NodeId id) const { return nodes_.at(id).value.value(); }
  const Image& grad(NodeId id) const { return nodes_.at(id).grad; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  NodeId push(Op op, std::vector<NodeId> inputs, Payload payload = {});
  void evaluate(Node& n);
  void propagate(const Node& n);
  Image& grad_of(NodeId id);

  std::deque<Node> nodes_;  // stable references across appends
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  bool passed = false;
};

using TapeBuilder = std::function<NodeId(Tape&, NodeId leaf)>;

// Central differences against the analytic gradient w.r.t. one leaf.
// Per-coordinate error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-2 * max|analytic|, 1e-12).
GradCheckReport grad_check(const TapeBuilder& build, const Image& at, double step = 1e-5, double tol = 1e-4);

}  // namespace cemx::ad
