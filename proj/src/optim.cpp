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

#include "cemx/optim.hpp"

#include <cmath>

#include "cemx/error.hpp"

namespace cemx {

TapeObjective::TapeObjective(const Image& latent0, const Builder& build) {
  leaf_ = tape_.leaf(latent0);
  root_ = build(tape_, leaf_);
}

double TapeObjective::value(const Image& latent) {
  tape_.set_value(leaf_, latent);
  tape_.forward();
  return tape_.scalar(root_);
}

double TapeObjective::value_and_grad(const Image& latent, Image& grad) {
  const double v = value(latent);
  tape_.backward(root_);
  grad = tape_.grad(leaf_);
  return v;
}

Image TapeObjective::grad_at_last() {
  tape_.backward(root_);
  return tape_.grad(leaf_);
}

namespace {

void apply_mask(Image& g, const Image* mask) {
  if (!mask) return;
  if (mask->channels() != 1 || mask->width() != g.width() || mask->height() != g.height())
    throw Error(ErrorCode::InvalidDims, "latent mask must be single-channel with the latent's spatial dims");
  for (int c = 0; c < g.channels(); ++c) {
    auto p = g.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= (*mask)[i];
  }
}

DescentResult adam(TapeObjective& f, Image x, const DescentOptions& o) {
  DescentResult r;
  Image g;
  r.initial = f.value_and_grad(x, g);
  Image m(x.width(), x.height(), x.channels()), v = m;
  for (int k = 1; k <= o.steps; ++k) {
    apply_mask(g, o.mask);
    const double b1 = 1.0 - std::pow(o.adam_beta1, k), b2 = 1.0 - std::pow(o.adam_beta2, k);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = o.adam_beta1 * m[i] + (1 - o.adam_beta1) * g[i];
      v[i] = o.adam_beta2 * v[i] + (1 - o.adam_beta2) * g[i] * g[i];
      x[i] -= o.step * (m[i] / b1) / (std::sqrt(v[i] / b2) + 1e-8);
    }
    const double val = f.value_and_grad(x, g);
    r.trace.push_back(val);
    if (o.on_step && !o.on_step(k, val)) break;
  }
  r.last_step = o.step;
  r.latent = std::move(x);
  return r;
}

}  // namespace

DescentResult descend(TapeObjective& f, Image x, const DescentOptions& o) {
  if (o.steps < 0) throw Error(ErrorCode::InvalidParam, "step count must be >= 0");
  if (!(o.step > 0)) throw Error(ErrorCode::InvalidParam, "step size must be positive");
  if (o.rule == StepRule::Adam) return adam(f, std::move(x), o);

  DescentResult r;
  Image g;
  double fx = f.value_and_grad(x, g);
  r.initial = fx;
  double t = o.step;
  for (int k = 1; k <= o.steps; ++k) {
    apply_mask(g, o.mask);
    const double gg = norm2(g);
    if (gg == 0.0) {
      r.stalled = true;
      break;
    }
    if (o.polyak) t = o.polyak_scale * std::max(fx - o.lower_bound, 0.0) / gg;
    bool accepted = false;
    Image trial;
    for (int h = 0; h <= o.max_halvings; ++h) {
      trial = x;
      add_inplace(trial, g, -t);
      const double ft = f.value(trial);
      if (ft < fx) {
        accepted = true;
        fx = ft;
        break;
      }
      ++r.rejected;
      t *= 0.5;
    }
    if (!accepted) {
      r.stalled = true;
      break;
    }
    x = std::move(trial);
    r.last_step = t;
    r.trace.push_back(fx);
    g = f.grad_at_last();
    if (o.on_step && !o.on_step(k, fx)) break;
    t *= o.grow;
  }
  r.latent = std::move(x);
  return r;
}

}  // namespace cemx
