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

#include "cemx/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "cemx/error.hpp"

namespace cemx::ad {

namespace {

void expect_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw Error(ErrorCode::GraphShapeError, std::string(what) + ": operand shapes differ");
}

Image map(const Image& a, double (*f)(double)) {
  Image out = a;
  for (auto& v : out.data()) v = f(v);
  return out;
}

// wrap[t][p]: source index for output p under tap t of a periodic conv.
std::vector<std::vector<int>> wrap_table(int n, int taps) {
  std::vector<std::vector<int>> t(static_cast<std::size_t>(taps), std::vector<int>(static_cast<std::size_t>(n)));
  const int center = taps / 2;
  for (int k = 0; k < taps; ++k)
    for (int p = 0; p < n; ++p) t[k][p] = (((p - (k - center)) % n) + n) % n;
  return t;
}

void conv_layer_backward(const Image& x, const Image& w, const Image& g, Image* gx, Image* gw, Image* gb) {
  const int cin = x.channels();
  const int cout = g.channels();
  const int kh = w.height(), kw = w.width();
  const int W = x.width(), H = x.height();
  const auto rows = wrap_table(H, kh);
  const auto cols = wrap_table(W, kw);
  for (int o = 0; o < cout; ++o) {
    auto go = g.plane(o);
    if (gb) {
      double s = 0.0;
      for (double v : go) s += v;
      gb->at(o, 0, 0) += s;
    }
    for (int i = 0; i < cin; ++i) {
      const double* src = x.plane(i).data();
      double* dx = gx ? gx->plane(i).data() : nullptr;
      const int wp = o * cin + i;
      for (int ty = 0; ty < kh; ++ty)
        for (int tx = 0; tx < kw; ++tx) {
          const double t = w.at(wp, ty, tx);
          const int* cx = cols[tx].data();
          double acc = 0.0;
          for (int y = 0; y < H; ++y) {
            const std::size_t srow = std::size_t(rows[ty][y]) * W;
            const double* grow = go.data() + std::size_t(y) * W;
            for (int xx = 0; xx < W; ++xx) acc += grow[xx] * src[srow + cx[xx]];
            if (dx && t != 0.0)
              for (int xx = 0; xx < W; ++xx) dx[srow + cx[xx]] += t * grow[xx];
          }
          if (gw) gw->at(wp, ty, tx) += acc;
        }
    }
  }
}

}  // namespace

Image conv_layer_apply(const Image& x, const Image& w, const Image& b) {
  const int cin = x.channels();
  const int cout = b.channels();
  if (b.width() != 1 || b.height() != 1 || w.channels() != cin * cout)
    throw Error(ErrorCode::GraphShapeError, "conv_layer: weight/bias shapes do not match the input");
  if (w.width() % 2 == 0 || w.height() % 2 == 0) throw Error(ErrorCode::GraphShapeError, "conv_layer: taps must be odd-sized");
  const int kh = w.height(), kw = w.width();
  const int W = x.width(), H = x.height();
  const auto rows = wrap_table(H, kh);
  const auto cols = wrap_table(W, kw);
  Image out(W, H, cout);
  for (int o = 0; o < cout; ++o) {
    auto dst = out.plane(o);
    std::fill(dst.begin(), dst.end(), b.at(o, 0, 0));
    for (int i = 0; i < cin; ++i) {
      const double* src = x.plane(i).data();
      const int wp = o * cin + i;
      for (int ty = 0; ty < kh; ++ty)
        for (int tx = 0; tx < kw; ++tx) {
          const double t = w.at(wp, ty, tx);
          if (t == 0.0) continue;
          const int* cx = cols[tx].data();
          for (int y = 0; y < H; ++y) {
            const double* srow = src + std::size_t(rows[ty][y]) * W;
            double* drow = dst.data() + std::size_t(y) * W;
            for (int xx = 0; xx < W; ++xx) drow[xx] += t * srow[cx[xx]];
          }
        }
    }
  }
  return out;
}

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Leaf: return "leaf";
    case Op::Conv2d: return "conv2d";
    case Op::ConvLayer: return "conv_layer";
    case Op::Downsample: return "downsample";
    case Op::Upsample: return "upsample";
    case Op::AreaDownscale: return "area_downscale";
    case Op::CemLinear: return "cem_linear";
    case Op::Add: return "add";
    case Op::AddN: return "add_n";
    case Op::Sub: return "sub";
    case Op::Scale: return "scale";
    case Op::Mul: return "mul";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Clip: return "clip";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Broadcast: return "broadcast";
    case Op::ReduceSum: return "sum";
    case Op::ReduceMean: return "mean";
    case Op::Abs: return "abs";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Reciprocal: return "reciprocal";
    case Op::MinSqDist: return "min_sq_dist";
    case Op::MinOf: return "min_of";
  }
  return "?";
}

NodeId Tape::push(Op op, std::vector<NodeId> inputs, Payload payload) {
  Node n;
  n.op = op;
  n.payload = std::move(payload);
  for (NodeId i : inputs) {
    if (i >= nodes_.size()) throw Error(ErrorCode::GraphShapeError, "input node does not exist");
    n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  }
  n.inputs = std::move(inputs);
  evaluate(n);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Tape::constant(Image v) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(v);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Tape::leaf(Image v) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Tape::conv2d(NodeId x, const Kernel& taps, BoundaryMode mode) {
  return push(Op::Conv2d, {x}, ConvPayload{taps, mode});
}
NodeId Tape::conv_layer(NodeId x, NodeId weights, NodeId bias) { return push(Op::ConvLayer, {x, weights, bias}); }
NodeId Tape::downsample(NodeId x, int factor) { return push(Op::Downsample, {x}, factor); }
NodeId Tape::upsample(NodeId x, int factor) { return push(Op::Upsample, {x}, factor); }
NodeId Tape::area_downscale(NodeId x, int factor) { return push(Op::AreaDownscale, {x}, factor); }
NodeId Tape::cem_linear(NodeId x, CemHandle op) {
  if (!op) throw Error(ErrorCode::InvalidParam, "cem_linear: null operator");
  return push(Op::CemLinear, {x}, std::move(op));
}
NodeId Tape::add(NodeId a, NodeId b) { return push(Op::Add, {a, b}); }
NodeId Tape::add_n(const std::vector<NodeId>& terms) {
  if (terms.empty()) throw Error(ErrorCode::GraphShapeError, "add_n: no terms");
  return push(Op::AddN, terms);
}
NodeId Tape::sub(NodeId a, NodeId b) { return push(Op::Sub, {a, b}); }
NodeId Tape::scale(NodeId a, double s) { return push(Op::Scale, {a}, s); }
NodeId Tape::mul(NodeId a, NodeId b) { return push(Op::Mul, {a, b}); }
NodeId Tape::leaky_relu(NodeId a, double slope) { return push(Op::LeakyRelu, {a}, slope); }
NodeId Tape::clip(NodeId a) { return push(Op::Clip, {a}); }
NodeId Tape::concat(NodeId a, NodeId b) { return push(Op::Concat, {a, b}); }
NodeId Tape::slice(NodeId a, SliceSpec spec) { return push(Op::Slice, {a}, spec); }
NodeId Tape::slice(NodeId a, Rect rect) {
  return push(Op::Slice, {a}, SliceSpec{0, value(a).channels(), rect});
}
NodeId Tape::broadcast(NodeId scalar, Shape shape) { return push(Op::Broadcast, {scalar}, shape); }
NodeId Tape::sum(NodeId a) { return push(Op::ReduceSum, {a}); }
NodeId Tape::mean(NodeId a) { return push(Op::ReduceMean, {a}); }
NodeId Tape::abs(NodeId a) { return push(Op::Abs, {a}); }
NodeId Tape::square(NodeId a) { return push(Op::Square, {a}); }
NodeId Tape::sqrt(NodeId a) { return push(Op::Sqrt, {a}); }
NodeId Tape::reciprocal(NodeId a) { return push(Op::Reciprocal, {a}); }
NodeId Tape::min_sq_dist(NodeId a, PatchBank bank) {
  if (!bank || bank->empty()) throw Error(ErrorCode::GraphShapeError, "min_sq_dist: empty bank");
  return push(Op::MinSqDist, {a}, std::move(bank));
}
NodeId Tape::min_of(const std::vector<NodeId>& scalars) {
  if (scalars.empty()) throw Error(ErrorCode::GraphShapeError, "min_of: no operands");
  return push(Op::MinOf, scalars);
}

void Tape::set_value(NodeId id, Image v) {
  Node& n = nodes_.at(id);
  if (n.op != Op::Leaf && n.op != Op::Constant)
    throw Error(ErrorCode::GraphShapeError, "set_value: only leaves and constants can be assigned");
  if (!n.value.same_shape(v)) throw Error(ErrorCode::GraphShapeError, "set_value: shape differs from the recorded one");
  n.value = std::move(v);
}

void Tape::forward() {
  for (auto& n : nodes_) evaluate(n);
}

void Tape::evaluate(Node& n) {
  auto in = [&](std::size_t k) -> const Image& { return nodes_[n.inputs[k]].value; };
  switch (n.op) {
    case Op::Constant:
    case Op::Leaf:
      return;
    case Op::Conv2d: {
      const auto& p = std::get<ConvPayload>(n.payload);
      n.value = cemx::conv2d(in(0), p.taps, p.mode);
      return;
    }
    case Op::ConvLayer:
      n.value = conv_layer_apply(in(0), in(1), in(2));
      return;
    case Op::Downsample:
      n.value = cemx::downsample(in(0), std::get<int>(n.payload));
      return;
    case Op::Upsample:
      n.value = cemx::upsample(in(0), std::get<int>(n.payload));
      return;
    case Op::AreaDownscale:
      n.value = cemx::area_downscale(in(0), std::get<int>(n.payload));
      return;
    case Op::CemLinear: {
      const auto& op = *std::get<CemHandle>(n.payload);
      if (in(0).width() != op.hr_width() || in(0).height() != op.hr_height())
        throw Error(ErrorCode::GraphShapeError, "cem_linear: input dims differ from the operator");
      n.value = cemx::cem_linear(op, in(0));
      return;
    }
    case Op::Add:
      expect_same(in(0), in(1), "add");
      n.value = in(0) + in(1);
      return;
    case Op::AddN: {
      Image acc = in(0);
      for (std::size_t k = 1; k < n.inputs.size(); ++k) {
        expect_same(acc, in(k), "add_n");
        add_inplace(acc, in(k));
      }
      n.value = std::move(acc);
      return;
    }
    case Op::Sub:
      expect_same(in(0), in(1), "sub");
      n.value = in(0) - in(1);
      return;
    case Op::Scale:
      n.value = std::get<double>(n.payload) * in(0);
      return;
    case Op::Mul: {
      expect_same(in(0), in(1), "mul");
      Image out = in(0);
      const auto& b = in(1).data();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
      n.value = std::move(out);
      return;
    }
    case Op::LeakyRelu: {
      const double s = std::get<double>(n.payload);
      Image out = in(0);
      for (auto& v : out.data()) v = v > 0 ? v : s * v;
      n.value = std::move(out);
      return;
    }
    case Op::Clip:
      n.value = clip01(in(0));
      return;
    case Op::Concat:
      if (in(0).width() != in(1).width() || in(0).height() != in(1).height())
        throw Error(ErrorCode::GraphShapeError, "concat: spatial dims differ");
      n.value = concat_channels(in(0), in(1));
      return;
    case Op::Slice: {
      const auto& s = std::get<SliceSpec>(n.payload);
      const Image& a = in(0);
      if (s.first_channel < 0 || s.channel_count <= 0 || s.first_channel + s.channel_count > a.channels() ||
          s.rect.x < 0 || s.rect.y < 0 || s.rect.w <= 0 || s.rect.h <= 0 || s.rect.x + s.rect.w > a.width() ||
          s.rect.y + s.rect.h > a.height())
        throw Error(ErrorCode::GraphShapeError, "slice: window outside the input");
      n.value = cemx::crop(select_channels(a, s.first_channel, s.channel_count), s.rect);
      return;
    }
    case Op::Broadcast: {
      const auto& s = std::get<Shape>(n.payload);
      n.value = Image(s.width, s.height, s.channels, in(0).value());
      return;
    }
    case Op::ReduceSum:
      n.value = Image::scalar(cemx::sum(in(0)));
      return;
    case Op::ReduceMean:
      if (in(0).empty()) throw Error(ErrorCode::GraphShapeError, "mean of an empty image");
      n.value = Image::scalar(cemx::sum(in(0)) / double(in(0).size()));
      return;
    case Op::Abs:
      n.value = map(in(0), [](double v) { return std::fabs(v); });
      return;
    case Op::Square:
      n.value = map(in(0), [](double v) { return v * v; });
      return;
    case Op::Sqrt:
      n.value = map(in(0), [](double v) { return std::sqrt(std::max(v, 0.0)); });
      return;
    case Op::Reciprocal:
      n.value = map(in(0), [](double v) { return 1.0 / v; });
      return;
    case Op::MinSqDist: {
      const auto& bank = *std::get<PatchBank>(n.payload);
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t k = 0; k < bank.size(); ++k) {
        expect_same(in(0), bank[k], "min_sq_dist");
        const double d = norm2(in(0) - bank[k]);
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      n.selected = arg;
      n.value = Image::scalar(best);
      return;
    }
    case Op::MinOf: {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const double v = in(k).value();
        if (v < best) {
          best = v;
          arg = k;
        }
      }
      n.selected = arg;
      n.value = Image::scalar(best);
      return;
    }
  }
}

Image& Tape::grad_of(NodeId id) { return nodes_[id].grad; }

void Tape::backward(NodeId root) {
  if (root >= nodes_.size()) throw Error(ErrorCode::GraphShapeError, "backward: root does not exist");
  const Image& rv = nodes_[root].value;
  if (rv.width() != 1 || rv.height() != 1 || rv.channels() != 1)
    throw Error(ErrorCode::GraphShapeError, "backward: root is not scalar");
  for (auto& n : nodes_) n.grad = Image(n.value.width(), n.value.height(), n.value.channels(), 0.0);
  nodes_[root].grad[0] = 1.0;
  for (std::size_t i = root + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.needs_grad || n.inputs.empty()) continue;
    propagate(n);
  }
}

void Tape::propagate(const Node& n) {
  const Image& g = n.grad;
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  auto in = [&](std::size_t k) -> const Image& { return nodes_[n.inputs[k]].value; };
  auto acc = [&](std::size_t k, const Image& d, double s = 1.0) {
    if (wants(k)) add_inplace(grad_of(n.inputs[k]), d, s);
  };
  switch (n.op) {
    case Op::Constant:
    case Op::Leaf:
      return;
    case Op::Conv2d: {
      const auto& p = std::get<ConvPayload>(n.payload);
      acc(0, conv2d_adjoint(g, p.taps, p.mode));
      return;
    }
    case Op::ConvLayer:
      conv_layer_backward(in(0), in(1), g, wants(0) ? &grad_of(n.inputs[0]) : nullptr,
                          wants(1) ? &grad_of(n.inputs[1]) : nullptr, wants(2) ? &grad_of(n.inputs[2]) : nullptr);
      return;
    case Op::Downsample:
      acc(0, cemx::upsample(g, std::get<int>(n.payload)));
      return;
    case Op::Upsample:
      acc(0, cemx::downsample(g, std::get<int>(n.payload)));
      return;
    case Op::AreaDownscale: {
      // Each output sample averages an f x f block: spread g / f^2 back over it.
      const int f = std::get<int>(n.payload);
      if (!wants(0)) return;
      Image& gx = grad_of(n.inputs[0]);
      const double w = 1.0 / (double(f) * f);
      for (int c = 0; c < gx.channels(); ++c)
        for (int y = 0; y < gx.height(); ++y)
          for (int x = 0; x < gx.width(); ++x) gx.at(c, y, x) += w * g.at(c, y / f, x / f);
      return;
    }
    case Op::CemLinear:
      acc(0, cem_adjoint(*std::get<CemHandle>(n.payload), g));
      return;
    case Op::Add:
      acc(0, g);
      acc(1, g);
      return;
    case Op::AddN:
      for (std::size_t k = 0; k < n.inputs.size(); ++k) acc(k, g);
      return;
    case Op::Sub:
      acc(0, g);
      acc(1, g, -1.0);
      return;
    case Op::Scale:
      acc(0, g, std::get<double>(n.payload));
      return;
    case Op::Mul: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Image& gk = grad_of(n.inputs[k]);
        const auto& other = in(1 - k).data();
        for (std::size_t i = 0; i < g.size(); ++i) gk[i] += g[i] * other[i];
      }
      return;
    }
    case Op::LeakyRelu: {
      if (!wants(0)) return;
      const double s = std::get<double>(n.payload);
      Image& gx = grad_of(n.inputs[0]);
      const auto& x = in(0).data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x[i] > 0 ? g[i] : s * g[i];
      return;
    }
    case Op::Clip: {
      if (!wants(0)) return;
      Image& gx = grad_of(n.inputs[0]);
      const auto& x = in(0).data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] >= 0.0 && x[i] <= 1.0) gx[i] += g[i];
      return;
    }
    case Op::Concat: {
      const int ca = in(0).channels();
      if (wants(0)) add_inplace(grad_of(n.inputs[0]), select_channels(g, 0, ca));
      if (wants(1)) add_inplace(grad_of(n.inputs[1]), select_channels(g, ca, in(1).channels()));
      return;
    }
    case Op::Slice: {
      if (!wants(0)) return;
      const auto& s = std::get<SliceSpec>(n.payload);
      Image& gx = grad_of(n.inputs[0]);
      for (int c = 0; c < s.channel_count; ++c)
        for (int y = 0; y < s.rect.h; ++y)
          for (int x = 0; x < s.rect.w; ++x) gx.at(s.first_channel + c, s.rect.y + y, s.rect.x + x) += g.at(c, y, x);
      return;
    }
    case Op::Broadcast:
      if (wants(0)) grad_of(n.inputs[0])[0] += cemx::sum(g);
      return;
    case Op::ReduceSum:
    case Op::ReduceMean: {
      if (!wants(0)) return;
      Image& gx = grad_of(n.inputs[0]);
      const double w = g[0] / (n.op == Op::ReduceMean ? double(gx.size()) : 1.0);
      for (auto& v : gx.data()) v += w;
      return;
    }
    case Op::Abs: {
      if (!wants(0)) return;
      Image& gx = grad_of(n.inputs[0]);
      const auto& x = in(0).data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x[i] > 0 ? g[i] : (x[i] < 0 ? -g[i] : 0.0);
      return;
    }
    case Op::Square: {
      if (!wants(0)) return;
      Image& gx = grad_of(n.inputs[0]);
      const auto& x = in(0).data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * x[i] * g[i];
      return;
    }
    case Op::Sqrt: {
      if (!wants(0)) return;
      Image& gx = grad_of(n.inputs[0]);
      const auto& r = n.value.data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (r[i] > 0) gx[i] += g[i] / (2.0 * r[i]);
      return;
    }
    case Op::Reciprocal: {
      if (!wants(0)) return;
      Image& gx = grad_of(n.inputs[0]);
      const auto& r = n.value.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i] * r[i] * r[i];
      return;
    }
    case Op::MinSqDist: {
      if (!wants(0)) return;
      const Image& s = (*std::get<PatchBank>(n.payload))[n.selected];
      add_inplace(grad_of(n.inputs[0]), in(0) - s, 2.0 * g[0]);
      return;
    }
    case Op::MinOf:
      if (wants(n.selected)) grad_of(n.inputs[n.selected])[0] += g[0];
      return;
  }
}

GradCheckReport grad_check(const TapeBuilder& build, const Image& at, double step, double tol) {
  Tape tape;
  const NodeId x = tape.leaf(at);
  const NodeId root = build(tape, x);
  tape.backward(root);
  const Image analytic = tape.grad(x);

  Image numeric(at.width(), at.height(), at.channels());
  Image probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    probe[i] = at[i] + step;
    tape.set_value(x, probe);
    tape.forward();
    const double fp = tape.scalar(root);
    probe[i] = at[i] - step;
    tape.set_value(x, probe);
    tape.forward();
    const double fm = tape.scalar(root);
    probe[i] = at[i];
    numeric[i] = (fp - fm) / (2.0 * step);
  }

  GradCheckReport r;
  r.coordinates = at.size();
  const double floor = std::max(1e-2 * linf(analytic), 1e-12);
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double d = std::fabs(analytic[i] - numeric[i]);
    const double rel = d / std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), floor});
    r.max_abs_error = std::max(r.max_abs_error, d);
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
  }
  r.passed = r.max_rel_error <= tol;
  return r;
}

}  // namespace cemx::ad
