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

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "cemx/error.hpp"
#include "cemx/image.hpp"
#include "text_io.hpp"

namespace cemx {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image from_interleaved(const std::vector<std::uint8_t>& bytes, int w, int h, int ch) {
  Image img(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c)
        img.at(c, y, x) = bytes[(std::size_t(y) * w + x) * ch + c] / 255.0;
  return img;
}

std::vector<std::uint8_t> to_interleaved(const Image& img) {
  const int ch = img.channels();
  std::vector<std::uint8_t> bytes(img.size());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < ch; ++c)
        bytes[(std::size_t(y) * img.width() + x) * ch + c] = to_byte(img.at(c, y, x));
  return bytes;
}

Image finish_read(png_image& png, const std::string& what) {
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int ch = color ? 3 : 1;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw Error(ErrorCode::IoError, what + ": " + msg);
  }
  return from_interleaved(buf, int(png.width), int(png.height), ch);
}

void check_encodable(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw Error(ErrorCode::IoError, "only 1- or 3-channel images can be encoded");
}

}  // namespace

Image load_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw Error(ErrorCode::IoError, "cannot read PNG '" + path + "': " + png.message);
  return finish_read(png, path);
}

Image decode_png(const std::string& bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
    throw Error(ErrorCode::IoError, std::string("cannot decode PNG: ") + png.message);
  return finish_read(png, "PNG buffer");
}

void save_png(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  const std::string bytes = encode_png(img);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

std::string encode_png(const Image& img) {
  check_encodable(img);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(img.width());
  png.height = png_uint_32(img.height());
  png.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto pixels = to_interleaved(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw Error(ErrorCode::IoError, std::string("PNG encode failed: ") + png.message);
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, pixels.data(), 0, nullptr))
    throw Error(ErrorCode::IoError, std::string("PNG encode failed: ") + png.message);
  bytes.resize(size);
  return bytes;
}

Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  auto token = [&]() {
    std::string t;
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(char(ch));
    }
    return t;
  };
  if (token() != "P5") throw Error(ErrorCode::IoError, "'" + path + "' is not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::IoError, "malformed PGM header in '" + path + "'");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw Error(ErrorCode::IoError, "unsupported PGM header in '" + path + "'");
  std::vector<std::uint8_t> bytes(std::size_t(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (in.gcount() != std::streamsize(bytes.size()))
    throw Error(ErrorCode::IoError, "truncated PGM '" + path + "'");
  Image img = from_interleaved(bytes, w, h, 1);
  if (maxval != 255)
    for (auto& v : img.data()) v = v * 255.0 / maxval;
  return img;
}

void save_pgm(const Image& img, const std::string& path) {
  if (img.channels() != 1) throw Error(ErrorCode::IoError, "PGM holds a single channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  const auto bytes = to_interleaved(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

void save_raster(const Image& latent, const std::string& path) {
  std::string bytes = "CEMZ";
  auto put32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  };
  put32(std::uint32_t(latent.width()));
  put32(std::uint32_t(latent.height()));
  put32(std::uint32_t(latent.channels()));
  bytes.reserve(bytes.size() + 8 * latent.size());
  for (double v : latent.data()) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
  }
  detail::write_file(path, bytes);
}

Image load_raster(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < 16 || bytes.compare(0, 4, "CEMZ") != 0) throw Error(ErrorCode::IoError, path + ": not a raster file");
  auto get = [&](std::size_t at, int n) {
    std::uint64_t v = 0;
    for (int b = 0; b < n; ++b) v |= std::uint64_t(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
    return v;
  };
  const auto w = get(4, 4), h = get(8, 4), c = get(12, 4);
  if (w == 0 || h == 0 || c == 0 || w > 1u << 15 || h > 1u << 15 || c > 64 || bytes.size() != 16 + 8 * w * h * c)
    throw Error(ErrorCode::IoError, path + ": raster header and size disagree");
  Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::bit_cast<double>(get(16 + 8 * i, 8));
  return img;
}

Image load_image(const std::string& path) {
  auto lower = path;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower.ends_with(".pgm")) return load_pgm(path);
  if (lower.ends_with(".cemz")) return load_raster(path);
  return load_png(path);
}

void save_image(const Image& img, const std::string& path) {
  auto lower = path;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower.ends_with(".pgm")) return save_pgm(img, path);
  if (lower.ends_with(".cemz")) return save_raster(img, path);
  save_png(img, path);
}

}  // namespace cemx
