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

#include "iwv3/nets.h"

#include "iwv3/error.h"

namespace iwv3 {

Tensor ConvLayer(const ModelWeights& weights, const std::string& prefix,
                 const Tensor& x, ConvMask mask) {
  return Conv2d(x, weights.Get(prefix + ".w"), weights.Get(prefix + ".b"),
                mask);
}

void AddConvLayer(ModelWeights& weights, const std::string& prefix, int out,
                  int in, int kernel, std::mt19937_64* rng, double stddev) {
  std::vector<double> w(static_cast<size_t>(out) * in * kernel * kernel, 0.0);
  if (rng && stddev > 0) {
    std::normal_distribution<double> normal(0.0, stddev);
    for (double& v : w) v = normal(*rng);
  }
  weights.Add(prefix + ".w", Tensor({out, in, kernel, kernel}, std::move(w)));
  weights.Add(prefix + ".b", Tensor::Zeros({out}));
}

PuOutput PuForward(PuKind kind, const ModelWeights& weights,
                   const std::string& prefix, const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != 1) {
    Fail(ErrorCode::kShapeMismatch,
         "P/U input must be (N,1,H,W), got " + ShapeString(x.shape()));
  }
  const bool affine = weights.Contains(prefix + ".shift.w");
  if (affine != (kind == PuKind::kAffine)) {
    Fail(ErrorCode::kWeightsMismatch,
         "weights under " + prefix + " do not match the requested P/U kind");
  }
  Tensor h = Relu(ConvLayer(weights, prefix + ".c1", Scale(x, 1.0 / kPuScale)));
  h = Relu(ConvLayer(weights, prefix + ".c2", h));
  if (kind == PuKind::kAdditive) {
    return {Scale(ConvLayer(weights, prefix + ".c3", h), kPuScale), std::nullopt};
  }
  return {Scale(ConvLayer(weights, prefix + ".shift", h), kPuScale),
          Exp(ConvLayer(weights, prefix + ".scale", h))};
}

void AddPuNet(ModelWeights& weights, PuKind kind, const std::string& prefix,
              int channels, const PuInit& init, std::mt19937_64& rng,
              double stddev) {
  if (channels < 2) {
    Fail(ErrorCode::kInvalidArgument, "P/U nets need at least 2 channels");
  }
  const int c = channels;
  std::normal_distribution<double> normal(0.0, stddev);
  auto at = [](int ci_count, int co, int ci, int ky, int kx) {
    return ((static_cast<size_t>(co) * ci_count + ci) * 3 + ky) * 3 + kx;
  };

  std::vector<double> w1(static_cast<size_t>(c) * 9);
  for (double& v : w1) v = normal(rng);
  for (int co = 0; co < 2; ++co) {
    for (int k = 0; k < 9; ++k) w1[co * 9 + k] = 0;
  }
  w1[at(1, 0, 0, 1, 1)] = 1;
  w1[at(1, 1, 0, 1, 1)] = -1;
  weights.Add(prefix + ".c1.w", Tensor({c, 1, 3, 3}, std::move(w1)));
  weights.Add(prefix + ".c1.b", Tensor::Zeros({c}));

  std::vector<double> w2(static_cast<size_t>(c) * c * 9);
  for (double& v : w2) v = normal(rng);
  for (int co = 0; co < c; ++co) {
    for (int ci = 0; ci < c; ++ci) {
      if (co >= 2 && ci >= 2) continue;
      for (int k = 0; k < 9; ++k) w2[at(c, co, ci, 0, 0) + k] = 0;
    }
  }
  w2[at(c, 0, 0, 1, 1)] = 1;
  w2[at(c, 1, 1, 1, 1)] = 1;
  weights.Add(prefix + ".c2.w", Tensor({c, c, 3, 3}, std::move(w2)));
  weights.Add(prefix + ".c2.b", Tensor::Zeros({c}));

  std::vector<double> w3(static_cast<size_t>(c) * 9, 0.0);
  for (int kx = 0; kx < 3; ++kx) {
    w3[at(c, 0, 0, 1, kx)] = init.taps[kx];
    w3[at(c, 0, 1, 1, kx)] = -init.taps[kx];
  }
  const std::string head = kind == PuKind::kAdditive ? ".c3" : ".shift";
  weights.Add(prefix + head + ".w", Tensor({1, c, 3, 3}, std::move(w3)));
  weights.Add(prefix + head + ".b", Tensor::Zeros({1}));
  if (kind == PuKind::kAffine) {
    weights.Add(prefix + ".scale.w", Tensor::Zeros({1, c, 3, 3}));
    weights.Add(prefix + ".scale.b", Tensor::Full({1}, init.log_scale));
  }
}

ModelWeights RandomizedWeights(const ModelWeights& like, std::mt19937_64& rng,
                               double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  ModelWeights out;
  for (const auto& e : like.entries()) {
    std::vector<double> v(e.value.size());
    for (double& x : v) x = normal(rng);
    out.Add(e.name, Tensor(e.value.shape(), std::move(v)));
  }
  return out;
}

}  // namespace iwv3
