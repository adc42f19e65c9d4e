// Copyright 2026 The iwv3 Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IWV3_IMAGE_H_
#define IWV3_IMAGE_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "iwv3/error.h"

namespace iwv3 {

// Row-major 2D grid of samples.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill) {
    if (width < 0 || height < 0) {
      Fail(ErrorCode::kInvalidArgument, "negative plane dimensions");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  T& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const {
    return data_[static_cast<size_t>(y) * width_ + x];
  }
  T* Row(int y) { return data_.data() + static_cast<size_t>(y) * width_; }
  const T* Row(int y) const {
    return data_.data() + static_cast<size_t>(y) * width_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Plane& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Plane16 = Plane<int16_t>;
using Plane32 = Plane<int32_t>;
using PlaneF = Plane<double>;

// 8-bit interleaved RGB raster.
class RgbImage {
 public:
  RgbImage() = default;
  // Throws kInvalidArgument for an empty (0-area) image.
  RgbImage(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  uint8_t* pixel(int x, int y) {
    return &pixels_[(static_cast<size_t>(y) * width_ + x) * 3];
  }
  const uint8_t* pixel(int x, int y) const {
    return &pixels_[(static_cast<size_t>(y) * width_ + x) * 3];
  }
  std::vector<uint8_t>& pixels() { return pixels_; }
  const std::vector<uint8_t>& pixels() const { return pixels_; }

  bool operator==(const RgbImage& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> pixels_;
};

// Binary PPM ("P6", maxval 255).
RgbImage ReadPpm(std::span<const uint8_t> bytes);
std::vector<uint8_t> WritePpm(const RgbImage& image);

RgbImage ReadPpmFile(const std::filesystem::path& path);
void WritePpmFile(const std::filesystem::path& path, const RgbImage& image);

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const uint8_t> bytes);

struct YCoCg {
  int16_t y, co, cg;
  bool operator==(const YCoCg&) const = default;
};

struct Rgb {
  int r, g, b;
  bool operator==(const Rgb&) const = default;
};

// Integer-reversible YCoCg-R. Shifts are arithmetic (floor division by 2).
constexpr YCoCg RgbToYCoCgR(int r, int g, int b) {
  const int co = r - b;
  const int t = b + (co >> 1);
  const int cg = g - t;
  const int y = t + (cg >> 1);
  return {static_cast<int16_t>(y), static_cast<int16_t>(co),
          static_cast<int16_t>(cg)};
}

constexpr Rgb YCoCgRToRgb(int y, int co, int cg) {
  const int t = y - (cg >> 1);
  const int g = cg + t;
  const int b = t - (co >> 1);
  const int r = b + co;
  return {r, g, b};
}

// Planar Y/Co/Cg image. Planes hold padded_width x padded_height samples;
// the first true_width x true_height of them are the image.
struct ImagePlanes {
  std::array<Plane16, 3> planes;
  int true_width = 0;
  int true_height = 0;

  int padded_width() const { return planes[0].width(); }
  int padded_height() const { return planes[0].height(); }
};

// Smallest multiple of 2^levels that is >= size.
int PaddedSize(int size, int levels);

// Whole-sample symmetric extension up to multiples of 2^levels:
// [a, b, c] extended to length 4 is [a, b, c, b].
template <typename T>
Plane<T> PadSymmetric(const Plane<T>& plane, int levels);

template <typename T>
Plane<T> Crop(const Plane<T>& plane, int width, int height);

// Forward color transform followed by padding for a `levels` pyramid.
ImagePlanes ToPlanes(const RgbImage& image, int levels);
// Crop to the true size and invert the color transform. Samples whose
// inverse falls outside [0, 255] are clamped.
RgbImage FromPlanes(const ImagePlanes& planes);

}  // namespace iwv3

#endif  // IWV3_IMAGE_H_
