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

#include "cemx/region.hpp"

#include <algorithm>

#include "cemx/error.hpp"
#include "region_json.hpp"

namespace cemx {

RegionMask full_region(int width, int height) { return Image(width, height, 1, 1.0); }

RegionMask rect_region(int width, int height, Rect r) {
  Image m(width, height, 1, 0.0);
  const int x0 = std::max(r.x, 0), y0 = std::max(r.y, 0);
  const int x1 = std::min(r.x + r.w, width), y1 = std::min(r.y + r.h, height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(0, y, x) = 1.0;
  return m;
}

RegionMask polygon_region(int width, int height, const std::vector<std::pair<double, double>>& v) {
  if (v.size() < 3) throw Error(ErrorCode::InvalidParam, "polygon needs at least 3 vertices");
  Image m(width, height, 1, 0.0);
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const auto [xi, yi] = v[i];
        const auto [xj, yj] = v[j];
        if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
      }
      m.at(0, y, x) = inside ? 1.0 : 0.0;
    }
  }
  return m;
}

RegionMask rle_region(int width, int height, const std::vector<long>& runs) {
  Image m(width, height, 1, 0.0);
  const long total = long(width) * height;
  long pos = 0;
  bool inside = false;
  for (long r : runs) {
    if (r < 0 || pos + r > total) throw Error(ErrorCode::InvalidParam, "run lengths overflow the image");
    if (inside)
      for (long i = pos; i < pos + r; ++i) m[std::size_t(i)] = 1.0;
    pos += r;
    inside = !inside;
  }
  return m;
}

std::vector<long> region_to_rle(const RegionMask& mask) {
  std::vector<long> runs;
  bool inside = false;
  long run = 0;
  for (double v : mask.data()) {
    const bool in = v > 0.0;
    if (in != inside) {
      runs.push_back(run);
      run = 0;
      inside = in;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

bool region_empty(const RegionMask& mask) {
  return std::none_of(mask.data().begin(), mask.data().end(), [](double v) { return v > 0.0; });
}

Rect region_bounds(const RegionMask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(0, y, x) > 0.0) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return {};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

namespace detail {

Rect rect_from_json(const nlohmann::json& doc) {
  try {
    return {doc.at("x").get<int>(), doc.at("y").get<int>(), doc.at("w").get<int>(), doc.at("h").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("rect: ") + e.what());
  }
}

RegionMask region_from_json(const nlohmann::json& doc, int width, int height) {
  try {
    const std::string type = doc.at("type").get<std::string>();
    if (type == "full") return full_region(width, height);
    if (type == "rect") {
      const Rect r = rect_from_json(doc);
      if (r.w <= 0 || r.h <= 0) throw Error(ErrorCode::InvalidParam, "rect region needs positive size");
      if (r.x < 0 || r.y < 0 || r.x + r.w > width || r.y + r.h > height)
        throw Error(ErrorCode::InvalidParam, "rect region lies outside the image");
      return rect_region(width, height, r);
    }
    if (type == "polygon") {
      std::vector<std::pair<double, double>> pts;
      for (const auto& p : doc.at("points")) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      return polygon_region(width, height, pts);
    }
    if (type == "rle") return rle_region(width, height, doc.at("runs").get<std::vector<long>>());
    throw Error(ErrorCode::InvalidParam, "unknown region type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("region: ") + e.what());
  }
}

}  // namespace detail

RegionMask region_from_json(const std::string& text, int width, int height) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("region: ") + e.what());
  }
  return detail::region_from_json(doc, width, height);
}

}  // namespace cemx
