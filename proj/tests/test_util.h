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

#ifndef IWV3_TESTS_TEST_UTIL_H_
#define IWV3_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "iwv3/image.h"
#include "iwv3/tensor.h"

namespace iwv3::testing {

inline std::filesystem::path DataPath(const std::string& name) {
  return std::filesystem::path(IWV3_TEST_DATA_DIR) / name;
}

inline const std::vector<std::string>& PhotoNames() {
  static const std::vector<std::string> kNames = {
      "astronaut.ppm", "chelsea.ppm", "coffee.ppm", "motorcycle.ppm", "rocket.ppm"};
  return kNames;
}

inline std::vector<RgbImage> LoadPhotos() {
  std::vector<RgbImage> out;
  for (const auto& n : PhotoNames()) out.push_back(ReadPpmFile(DataPath(n)));
  return out;
}

inline RgbImage RandomImage(int w, int h, std::mt19937_64& rng) {
  RgbImage im(w, h);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : im.pixels()) p = static_cast<uint8_t>(d(rng));
  return im;
}

// Smooth gradient with mild noise, closer to photo statistics.
inline RgbImage SmoothImage(int w, int h, std::mt19937_64& rng) {
  RgbImage im(w, h);
  std::uniform_real_distribution<double> phase(0, 6.28);
  std::normal_distribution<double> noise(0, 3);
  const double a = phase(rng), b = phase(rng);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = 128 + 80 * std::sin(0.05 * x + a + c) * std::cos(0.07 * y + b) +
                         noise(rng);
        im.pixel(x, y)[c] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return im;
}

inline Tensor RandomTensor(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> d(0, stddev);
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = d(rng);
  return Tensor(shape, std::move(v));
}

inline Tensor WithValue(const Tensor& t, size_t i, double v) {
  std::vector<double> vals(t.values().begin(), t.values().end());
  vals[i] = v;
  return Tensor(t.shape(), std::move(vals));
}

// Relative error with an absolute floor, for gradient comparisons.
inline double RelError(double a, double b, double floor = 1e-6) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

}  // namespace iwv3::testing

#endif  // IWV3_TESTS_TEST_UTIL_H_
