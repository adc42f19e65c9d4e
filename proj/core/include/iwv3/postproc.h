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

#ifndef IWV3_POSTPROC_H_
#define IWV3_POSTPROC_H_

#include <random>

#include "iwv3/image.h"
#include "iwv3/weights.h"

namespace iwv3 {

// Residual-in-residual post filter without channel attention:
//   dq.head (1 -> C), G groups of B blocks dq.g<g>.b<b>.{c1,c2} with a
//   skip around each block, dq.g<g>.tail closing each group with a skip,
//   dq.tail (C -> 1). Output = input + residual.
struct DequantConfig {
  int groups = 2;
  int blocks = 2;
  int channels = 16;
};

// Random layers except dq.tail, which starts at zero so the filter starts
// as the identity.
void AddDequantWeights(ModelWeights& weights, const DequantConfig& config,
                       std::mt19937_64& rng, double stddev);
bool HasDequantNet(const ModelWeights& weights);
DequantConfig DequantConfigOf(const ModelWeights& weights);

// Batched on (N,1,H,W). Recorded when the input or weights are.
Tensor DequantForward(const ModelWeights& weights, const Tensor& x);
PlaneF DequantFilter(const ModelWeights& weights, const PlaneF& plane);

}  // namespace iwv3

#endif  // IWV3_POSTPROC_H_
