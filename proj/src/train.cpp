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

#include "cemx/train.hpp"

#include <cmath>
#include <deque>
#include <numbers>
#include <random>

#include "cemx/error.hpp"
#include "cemx/explorer.hpp"

namespace cemx {

using ad::NodeId;
using ad::Tape;

std::vector<Image> sample_crops(const std::vector<Image>& images, int side, int count, std::uint64_t seed, int align) {
  if (images.empty()) throw Error(ErrorCode::InvalidParam, "no training images");
  if (side < 1 || count < 0 || align < 1) throw Error(ErrorCode::InvalidParam, "crop side, count and alignment must be positive");
  for (const Image& im : images)
    if (im.width() < side || im.height() < side)
      throw Error(ErrorCode::InvalidDims, "training image smaller than the crop");
  std::mt19937_64 rng(seed);
  std::vector<Image> out;
  for (int k = 0; k < count; ++k) {
    const Image& im = images[std::uniform_int_distribution<std::size_t>(0, images.size() - 1)(rng)];
    const int x = align * std::uniform_int_distribution<int>(0, (im.width() - side) / align)(rng);
    const int y = align * std::uniform_int_distribution<int>(0, (im.height() - side) / align)(rng);
    out.push_back(crop(im, {x, y, side, side}));
  }
  return out;
}

namespace {

NodeId mean_of(Tape& t, const std::vector<NodeId>& terms) {
  const NodeId s = terms.size() == 1 ? terms[0] : t.add_n(terms);
  return t.scale(s, 1.0 / double(terms.size()));
}

Image uniform_control(int w, int h, const std::array<double, 3>& z) {
  Image out(w, h, kControlChannels);
  for (int c = 0; c < kControlChannels; ++c) std::fill(out.plane(c).begin(), out.plane(c).end(), z[std::size_t(c)]);
  return out;
}

struct Adam {
  std::vector<Image> m, v;
  int t = 0;
  void step(std::vector<Image*> params, const std::vector<const Image*>& grads, double lr) {
    if (m.empty())
      for (const Image* p : params) {
        m.emplace_back(p->width(), p->height(), p->channels());
        v.emplace_back(p->width(), p->height(), p->channels());
      }
    ++t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k]->size(); ++i) {
        const double g = (*grads[k])[i];
        m[k][i] = b1 * m[k][i] + (1 - b1) * g;
        v[k][i] = b2 * v[k][i] + (1 - b2) * g * g;
        (*params[k])[i] -= lr * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + eps);
      }
  }
};

}  // namespace

GeneratorLoss generator_loss(Tape& t, const GeneratorParams& params, const std::vector<BatchSample>& batch,
                             const LinearCritic& critic, const CemHandle& op, const LossWeights& w,
                             const PercentileCalibration& cal) {
  if (batch.empty()) throw Error(ErrorCode::InvalidParam, "empty batch");
  w.validate();
  GeneratorLoss out;
  std::vector<NodeId> adv, range, structure, map;
  const NodeId cw = t.constant(critic.w);
  for (const BatchSample& s : batch) {
    const GeneratorNodes gs = generate_on_tape(params, s.y, t.constant(s.z_struct), op, t, true);
    const GeneratorNodes gm = generate_on_tape(params, s.y, t.constant(s.z_map), op, t, true);
    out.calls.push_back(gs);
    out.calls.push_back(gm);
    adv.push_back(t.sub(t.constant(Image::scalar(-critic.b)), t.sum(t.mul(gs.x_hat, cw))));
    range.push_back(range_loss(t, gs.x_hat));
    structure.push_back(struct_loss(t, gs.x_hat, s.x, s.l1, s.l2, s.theta, cal));
    map.push_back(t.mean(t.abs(t.sub(gm.x_hat, t.constant(s.x)))));
  }
  out.adv = mean_of(t, adv);
  out.range = mean_of(t, range);
  out.structure = mean_of(t, structure);
  out.map = mean_of(t, map);
  out.total = t.add_n({out.adv, t.scale(out.range, w.range), t.scale(out.structure, w.structure), t.scale(out.map, w.map)});
  return out;
}

void accumulate_param_grads(const Tape& t, const GeneratorLoss& loss, std::vector<Image>& dw, std::vector<Image>& db) {
  if (loss.calls.empty()) throw Error(ErrorCode::InvalidParam, "loss has no generator calls");
  const std::size_t n = loss.calls[0].weights.size();
  dw.clear();
  db.clear();
  for (std::size_t l = 0; l < n; ++l) {
    const Image& w0 = t.value(loss.calls[0].weights[l]);
    const Image& b0 = t.value(loss.calls[0].biases[l]);
    dw.emplace_back(w0.width(), w0.height(), w0.channels());
    db.emplace_back(b0.width(), b0.height(), b0.channels());
    for (const GeneratorNodes& g : loss.calls) {
      add_inplace(dw[l], t.grad(g.weights[l]));
      add_inplace(db[l], t.grad(g.biases[l]));
    }
  }
}

TrainResult train_toy(const std::vector<Image>& images, const Kernel& h, const TrainOptions& o,
                      const std::function<void(int, const TrainStep&)>& on_step) {
  if (images.empty()) throw Error(ErrorCode::InvalidParam, "no training images");
  if (o.factor < 1 || o.crop < o.factor || o.crop % o.factor != 0)
    throw Error(ErrorCode::InvalidParam, "crop must be a positive multiple of the scale factor");
  if (o.batch < 1 || o.steps < 0 || o.max_critic_batches < 1 || o.map_iters < 0)
    throw Error(ErrorCode::InvalidParam, "batch, steps, critic budget or map iterations out of range");
  if (!(o.gen_lr > 0.0) || !(o.critic_lr > 0.0)) throw Error(ErrorCode::InvalidParam, "learning rates must be > 0");
  o.weights.validate();
  const int C = images[0].channels();
  for (const Image& im : images)
    if (im.channels() != C) throw Error(ErrorCode::InvalidDims, "training images differ in channel count");

  const CemHandle op = std::make_shared<const CemOperator>(h, o.factor, o.crop, o.crop);
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TrainResult r;
  // z taps start at zero, as when fine-tuning a pretrained network.
  r.params = GeneratorParams::toy(o.factor, C, o.seed, true, o.features);
  r.critic.w = Image(o.crop, o.crop, C);
  Adam adam;
  std::deque<bool> window;

  auto knob_sample = [&](BatchSample& s) {
    s.l1 = unit(rng);
    s.l2 = unit(rng);
    s.theta = 2.0 * std::numbers::pi * unit(rng);
    s.z_struct = uniform_control(o.crop, o.crop, encode_knobs(compose_Sd(s.l1, s.l2, s.theta)));
  };

  for (int step = 0; step < o.steps; ++step) {
    TrainStep rec;
    // Critic batches until it has been right on the last ten in a row.
    while (rec.critic_batches < o.max_critic_batches) {
      const auto reals = sample_crops(images, o.crop, o.batch, rng(), o.factor);
      Image mean_real(o.crop, o.crop, C), mean_fake(o.crop, o.crop, C);
      double d_real = 0.0, d_fake = 0.0;
      for (const Image& x : reals) {
        BatchSample s;
        knob_sample(s);
        const Image fake = generate(r.params, degrade(*op, x), s.z_struct, *op).x_hat;
        d_real += r.critic(x);
        d_fake += r.critic(fake);
        add_inplace(mean_real, x, 1.0 / o.batch);
        add_inplace(mean_fake, fake, 1.0 / o.batch);
      }
      const bool correct = d_real > d_fake;
      r.critic_outcomes.push_back(correct);
      window.push_back(correct);
      if (window.size() > kCredibilityWindow) window.pop_front();
      ++rec.critic_batches;

      // d/dw of D(fake) - D(real) + gp (|w| - 1)^2; the bias cancels.
      Image g = mean_fake - mean_real;
      const double nw = std::sqrt(norm2(r.critic.w));
      if (nw > 0.0) add_inplace(g, r.critic.w, 2.0 * o.weights.gp * (nw - 1.0) / nw);
      add_inplace(r.critic.w, g, -o.critic_lr);

      if (credibility_gate(window)) break;
    }

    if (credibility_gate(window)) {
      std::vector<BatchSample> batch;
      for (Image& x : sample_crops(images, o.crop, o.batch, rng(), o.factor)) {
        BatchSample s;
        s.x = std::move(x);
        s.y = degrade(*op, s.x);
        knob_sample(s);
        s.z_map = map_loss(r.params, s.y, s.x, op, zero_control(o.crop, o.crop), o.map_iters).z;
        batch.push_back(std::move(s));
      }
      Tape t;
      const GeneratorLoss loss = generator_loss(t, r.params, batch, r.critic, op, o.weights, o.calibration);
      rec.losses = {t.scalar(loss.adv), t.scalar(loss.range), t.scalar(loss.structure), t.scalar(loss.map)};
      rec.total = t.scalar(loss.total);
      t.backward(loss.total);
      std::vector<Image> dw, db;
      accumulate_param_grads(t, loss, dw, db);
      std::vector<Image*> ps;
      std::vector<const Image*> gs;
      for (std::size_t l = 0; l < r.params.layers.size(); ++l) {
        ps.push_back(&r.params.layers[l].weights);
        gs.push_back(&dw[l]);
        ps.push_back(&r.params.layers[l].bias);
        gs.push_back(&db[l]);
      }
      adam.step(ps, gs, o.gen_lr);
      rec.generator_step = true;
    }
    r.steps.push_back(rec);
    if (on_step) on_step(step, rec);
  }
  return r;
}

}  // namespace cemx
