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

#include "iwv3/quant.h"

#include <cmath>
#include <string>

#include "iwv3/error.h"
#include "iwv3/ops.h"

namespace iwv3 {
namespace {

void RequirePositive(double qstep) {
  if (!(qstep > 0)) {
    Fail(ErrorCode::kInvalidArgument,
         "qstep must be positive, got " + std::to_string(qstep));
  }
}

}  // namespace

int32_t Quantize(double c, double qstep) {
  RequirePositive(qstep);
  return static_cast<int32_t>(std::round(c / qstep));
}

std::vector<int32_t> Quantize(std::span<const double> c, double qstep) {
  RequirePositive(qstep);
  std::vector<int32_t> out(c.size());
  for (size_t i = 0; i < c.size(); ++i) {
    out[i] = static_cast<int32_t>(std::round(c[i] / qstep));
  }
  return out;
}

std::vector<double> Dequantize(std::span<const int32_t> q, double qstep) {
  RequirePositive(qstep);
  std::vector<double> out(q.size());
  for (size_t i = 0; i < q.size(); ++i) out[i] = q[i] * qstep;
  return out;
}

double SoftRound(double y, double alpha) {
  const double f = std::floor(y);
  const double r = y - f - 0.5;
  return f + 0.5 * std::tanh(alpha * r) / std::tanh(alpha / 2) + 0.5;
}

Tensor SoftRound(const Tensor& y, double alpha) {
  const Tensor f = Floor(y);
  const Tensor r = AddScalar(Sub(y, f), -0.5);
  const Tensor t = Scale(Tanh(Scale(r, alpha)), 0.5 / std::tanh(alpha / 2));
  return Add(AddScalar(t, 0.5), f);
}

double SoftToHard(double y, double alpha, double u) {
  return SoftRound(SoftRound(y, alpha) + u, alpha);
}

Tensor SoftToHard(const Tensor& y, double alpha, const Tensor& u) {
  return SoftRound(Add(SoftRound(y, alpha), u), alpha);
}

Tensor UniformNoise(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(shape, std::move(v));
}

double AnnealAlpha(int step, int total) {
  if (total <= 0) Fail(ErrorCode::kInvalidArgument, "anneal over zero steps");
  if (step < 0) Fail(ErrorCode::kInvalidArgument, "negative anneal step");
  if (step >= total) return kAlphaMax;
  return kAlphaMin + (kAlphaMax - kAlphaMin) * step / total;
}

QuantGrid::QuantGrid(int levels, std::vector<double> qsteps)
    : levels_(levels), qsteps_(std::move(qsteps)) {
  if (levels < 1) Fail(ErrorCode::kInvalidArgument, "levels must be >= 1");
  if (qsteps_.size() != static_cast<size_t>(3 * subbands())) {
    Fail(ErrorCode::kInvalidArgument, "qstep count does not match levels");
  }
  for (double q : qsteps_) RequirePositive(q);
}

QuantGrid QuantGrid::Uniform(int levels, double qstep) {
  return QuantGrid(levels, std::vector<double>(3 * (3 * levels + 1), qstep));
}

void AddLogQsteps(ModelWeights& weights, int levels, double qstep) {
  RequirePositive(qstep);
  weights.Add(kLogQstepName,
              Tensor::Full({3 * levels + 1, 3}, std::log(qstep)));
}

int LevelsOfLogQsteps(const ModelWeights& weights) {
  const Tensor& t = weights.Get(kLogQstepName);
  if (t.rank() != 2 || t.dim(1) != 3 || t.dim(0) < 4 || (t.dim(0) - 1) % 3) {
    Fail(ErrorCode::kWeightsMismatch,
         "log-qstep tensor has shape " + ShapeString(t.shape()));
  }
  return (t.dim(0) - 1) / 3;
}

QuantGrid QuantGridFromWeights(const ModelWeights& weights, double offset) {
  const int levels = LevelsOfLogQsteps(weights);
  const Tensor& t = weights.Get(kLogQstepName);
  const int sb = 3 * levels + 1;
  std::vector<double> q(3 * sb);
  for (int c = 0; c < 3; ++c) {
    for (int s = 0; s < sb; ++s) {
      const double v = static_cast<float>(std::exp(t[s * 3 + c]) + offset);
      if (!(v > 0)) {
        Fail(ErrorCode::kInvalidArgument,
             "qstep offset " + std::to_string(offset) +
                 " drives a qstep to " + std::to_string(v));
      }
      q[c * sb + s] = v;
    }
  }
  return QuantGrid(levels, std::move(q));
}

}  // namespace iwv3
