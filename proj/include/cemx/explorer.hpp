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

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cemx/cem.hpp"
#include "cemx/edit.hpp"
#include "cemx/generator.hpp"
#include "cemx/image.hpp"
#include "cemx/kernel.hpp"
#include "cemx/losses.hpp"
#include "cemx/optim.hpp"

namespace cemx {

enum class SessionMode { Generator, DirectParam };

const char* mode_name(SessionMode m) noexcept;
SessionMode parse_mode(const std::string& s);            // "generator" | "direct"
BoundaryMode parse_boundary(const std::string& s);       // "periodic" | "replicate"
const char* boundary_name(BoundaryMode b) noexcept;

struct SessionConfig {
  int factor = 4;
  BoundaryMode boundary = BoundaryMode::Periodic;
  SessionMode mode = SessionMode::DirectParam;
  double tau = 0.01;
  std::size_t history_limit = 64;
  int pad_lr = CemOperator::kDefaultPadLr;
  std::optional<GeneratorParams> generator;  // required in Generator mode
};

enum class Tool { Scribble, Brighten, Darken, TvMin, Variance, Magnitude, Imprint, PatchCollection, Periodicity };
const char* tool_name(Tool t) noexcept;

struct EditJobSpec {
  Tool tool = Tool::Scribble;
  RegionMask region;        // where the objective looks
  RegionMask latent_region; // where the latent may change; defaults to region
  int steps = 50;
  double step_size = 1.0;
  StepRule rule = StepRule::Backtracking;
  bool polyak = false;
  std::optional<double> tau;  // overrides the session's regularizer weight

  std::vector<double> color;       // scribble
  double factor = 1.0;             // brighten/darken/magnitude
  double delta = 0.0;              // variance
  int stride = 0;                  // variance/magnitude target grid (0 = tool default)
  ImprintPlacement placement;      // imprint
  std::optional<Image> content;    // imprint; empty means the current image inside placement.rect
  RegionMask source_region;        // patch collection
  PatchVariant variant = PatchVariant::Plain;
  std::vector<Direction> directions;  // periodicity
  std::vector<int> periods;           // periodicity; empty means estimate
};

// {"tool", "region", "params", "steps", "step_size", ...}; InvalidParam on a
// malformed spec. width/height are the HR dims used to rasterize regions.
EditJobSpec parse_edit_spec(const std::string& json, int width, int height, int channels);

struct JobReport {
  std::vector<double> trace;      // regularized objective after each accepted step
  std::vector<double> objective;  // tool objective alone, same indexing
  double initial = 0.0;
  double initial_objective = 0.0;
  int accepted = 0;
  int rejected = 0;
  bool stalled = false;
};

struct Alternative {
  Image latent;
  Image x_hat;
};

struct AlternativesOptions {
  int n = 4;
  bool anchored = false;
  double mu = 0.1;
  int steps = 40;
  double init_amplitude = 0.05;
  std::uint64_t seed = 1;
};

// Explores the consistent set for one LR image. All public members are
// thread-safe; at most one long operation (edit job, alternatives) runs at a
// time and any other mutation meanwhile raises Busy.
class Session {
 public:
  Session(Image y, const Kernel& h, SessionConfig cfg);

  const Image& y() const noexcept { return y_; }
  const Kernel& kernel() const noexcept { return op_->kernel(); }
  const CemOperator& op() const noexcept { return *op_; }
  const CemHandle& op_handle() const noexcept { return op_; }
  const SessionConfig& config() const noexcept { return cfg_; }
  int hr_width() const noexcept { return op_->hr_width(); }
  int hr_height() const noexcept { return op_->hr_height(); }

  Image x_hat() const;
  Image latent() const;
  Residual consistency() const;
  std::size_t history_size() const;
  bool busy() const noexcept { return busy_.load(); }

  // Recomputes x_hat for a candidate latent without touching the session.
  Image render(const Image& latent) const;

  void set_knobs(const RegionMask& region, double l1, double l2, double theta, ComposeMode mode = ComposeMode::Product);
  JobReport run_edit(const EditJobSpec& spec, std::function<bool(int, double)> on_step = {});
  std::vector<Alternative> diverse_alternatives(const AlternativesOptions& opts);
  const std::vector<Alternative>& alternatives() const noexcept { return alternatives_; }
  Image alternative_image(std::size_t i) const;
  void adopt_alternative(std::size_t i);
  void set_latent(Image latent);  // pushes history
  Image undo();

  void export_to(const std::string& dir) const;
  static std::unique_ptr<Session> load(const std::string& dir);

 private:
  class BusyGuard;
  void push_history_locked();
  void refresh_locked();

  Image y_;
  SessionConfig cfg_;
  CemHandle op_;
  Image offset_;  // cem_offset(y)

  mutable std::mutex mu_;
  Image latent_;
  Image x_hat_;
  std::vector<Image> history_;
  std::vector<Alternative> alternatives_;
  std::atomic<bool> busy_{false};
};

// Knob encoding into the three control channels and back.
std::array<double, 3> encode_knobs(const StructureTensor& sd);
StructureTensor decode_knobs(const std::array<double, 3>& z);

struct DiversityReport {
  double sigma = 0.0;  // mean per-sample std across outputs after nullspace projection, 0-255 scale
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  std::vector<double> rmse;  // per output, when a reference is given
};

DiversityReport diversity_metric(const std::vector<Image>& outputs, const CemOperator& op,
                                 const Image* reference = nullptr);
double rmse(const Image& a, const Image& b);  // 0-255 scale
double psnr(const Image& a, const Image& b);  // +inf for identical images

}  // namespace cemx
