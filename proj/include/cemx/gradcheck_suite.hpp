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

#include "cemx/tape.hpp"

namespace cemx {

// One differentiable loss or edit objective with the point it is checked at.
struct GradCheckEntry {
  std::string name;
  ad::TapeBuilder build;
  Image at;
};

// Every loss and edit objective, on random 12x12 three-channel inputs drawn
// from seed.
std::vector<GradCheckEntry> registered_objectives(std::uint64_t seed = 1);

struct GradCheckResult {
  std::string name;
  ad::GradCheckReport report;
};

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 1, double tol = 1e-4);

}  // namespace cemx
