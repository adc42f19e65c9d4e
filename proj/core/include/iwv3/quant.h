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

#ifndef IWV3_QUANT_H_
#define IWV3_QUANT_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "iwv3/tensor.h"
#include "iwv3/weights.h"

namespace iwv3 {

inline constexpr double kAlphaMin = 2.0;
inline constexpr double kAlphaMax = 12.0;

// round(c / qstep), ties away from zero.
int32_t Quantize(double c, double qstep);
std::vector<int32_t> Quantize(std::span<const double> c, double qstep);
std::vector<double> Dequantize(std::span<const int32_t> q, double qstep);

// s_a(y) = floor(y) + tanh(a*r) / (2 tanh(a/2)) + 1/2, r = y - floor(y) - 1/2.
double SoftRound(double y, double alpha);
Tensor SoftRound(const Tensor& y, double alpha);

// s_a(s_a(y) + u).
double SoftToHard(double y, double alpha, double u);
Tensor SoftToHard(const Tensor& y, double alpha, const Tensor& u);

// Uniform(-1/2, 1/2) noise of the given shape.
Tensor UniformNoise(const Shape& shape, std::mt19937_64& rng);

// Linear from 2 at step 0 to 12 at `total`, clamped to 12 beyond.
double AnnealAlpha(int step, int total);

// QSteps per (channel, subband) with subbands in coding order.
class QuantGrid {
 public:
  QuantGrid() = default;
  // Throws kInvalidArgument for any non-positive step.
  QuantGrid(int levels, std::vector<double> qsteps);

  static QuantGrid Uniform(int levels, double qstep);
  static QuantGrid Lossless(int levels) { return Uniform(levels, 1.0); }

  int levels() const { return levels_; }
  int subbands() const { return 3 * levels_ + 1; }
  double at(int channel, int subband) const {
    return qsteps_[channel * subbands() + subband];
  }
  const std::vector<double>& values() const { return qsteps_; }

 private:
  int levels_ = 0;
  std::vector<double> qsteps_;
};

// Trainable log-QSteps: (3L+1, 3), subband-major.
inline constexpr const char* kLogQstepName = "quant.log_qstep";
void AddLogQsteps(ModelWeights& weights, int levels, double qstep);
int LevelsOfLogQsteps(const ModelWeights& weights);

// exp(log-QStep) + offset, rounded to 32-bit float. Throws
// kInvalidArgument if the offset drives a step to zero or below.
QuantGrid QuantGridFromWeights(const ModelWeights& weights, double offset = 0);

}  // namespace iwv3

#endif  // IWV3_QUANT_H_
