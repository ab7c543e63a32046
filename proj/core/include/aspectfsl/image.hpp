/*
 * Copyright 2026 The aspectfsl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace aspectfsl {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// 8-bit interleaved RGB image, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);

  const std::vector<std::uint8_t>& bytes() const { return pixels_; }
  std::vector<std::uint8_t>& bytes() { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Writes an 8-bit RGB PNG. Output bytes depend only on the pixels.
void write_png(const std::filesystem::path& path, const Image& image);

/// Reads any 8/16-bit PNG; alpha is composited over `background`.
Image read_png(const std::filesystem::path& path, Rgb background = {255, 255, 255});

/// Copies the `w`×`h` region at (`x`, `y`). Throws if it leaves the image.
Image crop(const Image& image, int x, int y, int w, int h);

/// Pads to a centered square with `background`, then nearest-neighbour
/// scales to `size`×`size`.
Image pad_and_scale(const Image& image, int size, Rgb background = {255, 255, 255});

/// Planar CHW floats in [0, 1], appended to `out`.
void append_chw(const Image& image, std::vector<float>& out);

}  // namespace aspectfsl
