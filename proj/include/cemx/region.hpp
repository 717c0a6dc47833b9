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

#include <string>
#include <utility>
#include <vector>

#include "cemx/image.hpp"

namespace cemx {

RegionMask full_region(int width, int height);
RegionMask rect_region(int width, int height, Rect r);  // clipped to the image
// Even-odd fill sampled at pixel centres (x + 0.5, y + 0.5).
RegionMask polygon_region(int width, int height, const std::vector<std::pair<double, double>>& vertices);
// Row-major run lengths alternating outside/inside, starting with outside.
RegionMask rle_region(int width, int height, const std::vector<long>& runs);
std::vector<long> region_to_rle(const RegionMask& mask);

// {"type":"full"} | {"type":"rect","x","y","w","h"} | {"type":"polygon","points":[[x,y],...]}
// | {"type":"rle","runs":[...]}. InvalidParam on malformed input.
RegionMask region_from_json(const std::string& text, int width, int height);

bool region_empty(const RegionMask& mask);
Rect region_bounds(const RegionMask& mask);  // w = h = 0 when empty

}  // namespace cemx
