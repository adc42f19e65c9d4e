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

#ifndef IWV3_NETS_H_
#define IWV3_NETS_H_

#include <optional>
#include <random>
#include <string>

#include "iwv3/ops.h"
#include "iwv3/weights.h"

namespace iwv3 {

// Conv layer parameters live under "<prefix>.w" (Co,Ci,k,k) and
// "<prefix>.b" (Co).
Tensor ConvLayer(const ModelWeights& weights, const std::string& prefix,
                 const Tensor& x, ConvMask mask = ConvMask::kNone);

// Adds a conv layer with N(0, stddev^2) kernel and zero bias. A null rng
// or zero stddev gives an all-zero kernel.
void AddConvLayer(ModelWeights& weights, const std::string& prefix, int out,
                  int in, int kernel, std::mt19937_64* rng, double stddev);

enum class PuKind { kAdditive, kAffine };

struct PuOutput {
  Tensor shift;
  std::optional<Tensor> scale;  // Affine only; strictly positive.
};

// P/U nets see their input divided by this; the shift is scaled back.
inline constexpr double kPuScale = 64.0;

// Predict/update network on a (N,1,H,W) plane.
//   additive: c1 (1->C) relu, c2 (C->C) relu, c3 (C->1)
//   affine:   c1, c2 trunk as above, heads "shift" and "scale" (C->1),
//             scale = exp(raw)
PuOutput PuForward(PuKind kind, const ModelWeights& weights,
                   const std::string& prefix, const Tensor& x);

// Initial P/U as a 3-tap linear filter along the width axis,
// shift[n] = taps[0]*x[n-1] + taps[1]*x[n] + taps[2]*x[n+1], and for affine
// a constant scale e^log_scale. The linear part is carried through the
// ReLU layers on two channels as relu(x) - relu(-x); the remaining
// channels start small and random with zero output weights.
struct PuInit {
  double taps[3] = {0, 0, 0};
  double log_scale = 0;
};
void AddPuNet(ModelWeights& weights, PuKind kind, const std::string& prefix,
              int channels, const PuInit& init, std::mt19937_64& rng,
              double stddev);

// Fills every entry with N(0, stddev^2) draws, keeping shapes.
ModelWeights RandomizedWeights(const ModelWeights& like, std::mt19937_64& rng,
                               double stddev);

}  // namespace iwv3

#endif  // IWV3_NETS_H_
