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

#include "iwv3/postproc.h"

#include <cmath>
#include <string>

#include "iwv3/error.h"
#include "iwv3/lifting.h"
#include "iwv3/nets.h"
#include "iwv3/ops.h"

namespace iwv3 {
namespace {

// Samples are brought to roughly unit range inside the network.
constexpr double kInputScale = 64.0;

std::string Block(int g, int b) {
  return "dq.g" + std::to_string(g) + ".b" + std::to_string(b);
}

std::string Group(int g) { return "dq.g" + std::to_string(g); }

}  // namespace

void AddDequantWeights(ModelWeights& weights, const DequantConfig& config,
                       std::mt19937_64& rng, double stddev) {
  if (config.groups < 0 || config.blocks < 0 || config.channels < 1) {
    Fail(ErrorCode::kInvalidArgument, "bad dequantization net size");
  }
  const int c = config.channels;
  const double inner = stddev / std::sqrt(c);
  AddConvLayer(weights, "dq.head", c, 1, 3, &rng, stddev);
  for (int g = 0; g < config.groups; ++g) {
    for (int b = 0; b < config.blocks; ++b) {
      AddConvLayer(weights, Block(g, b) + ".c1", c, c, 3, &rng, inner);
      AddConvLayer(weights, Block(g, b) + ".c2", c, c, 3, &rng, inner);
    }
    AddConvLayer(weights, Group(g) + ".tail", c, c, 3, &rng, inner);
  }
  AddConvLayer(weights, "dq.tail", 1, c, 3, nullptr, 0);
}

bool HasDequantNet(const ModelWeights& weights) {
  return weights.Contains("dq.head.w");
}

DequantConfig DequantConfigOf(const ModelWeights& weights) {
  DequantConfig config;
  config.channels = weights.Get("dq.head.w").dim(0);
  config.groups = 0;
  while (weights.Contains(Group(config.groups) + ".tail.w")) ++config.groups;
  config.blocks = 0;
  while (weights.Contains(Block(0, config.blocks) + ".c1.w")) ++config.blocks;
  return config;
}

Tensor DequantForward(const ModelWeights& weights, const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != 1) {
    Fail(ErrorCode::kShapeMismatch,
         "post filter input must be (N,1,H,W), got " + ShapeString(x.shape()));
  }
  const DequantConfig config = DequantConfigOf(weights);
  const Tensor head = ConvLayer(weights, "dq.head", Scale(x, 1.0 / kInputScale));
  Tensor h = head;
  for (int g = 0; g < config.groups; ++g) {
    Tensor gi = h;
    for (int b = 0; b < config.blocks; ++b) {
      Tensor r = Relu(ConvLayer(weights, Block(g, b) + ".c1", gi));
      r = ConvLayer(weights, Block(g, b) + ".c2", r);
      gi = Add(gi, r);
    }
    h = Add(h, ConvLayer(weights, Group(g) + ".tail", gi));
  }
  const Tensor residual = ConvLayer(weights, "dq.tail", h);
  return Add(x, Scale(residual, kInputScale));
}

PlaneF DequantFilter(const ModelWeights& weights, const PlaneF& plane) {
  return ToPlane(DequantForward(weights, ToTensor(plane)));
}

}  // namespace iwv3
