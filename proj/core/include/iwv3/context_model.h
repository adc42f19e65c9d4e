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

#ifndef IWV3_CONTEXT_MODEL_H_
#define IWV3_CONTEXT_MODEL_H_

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "iwv3/gmm.h"
#include "iwv3/image.h"
#include "iwv3/subband.h"
#include "iwv3/weights.h"

namespace iwv3 {

// Stacked long-term context grids; fewer grids are zero-filled.
inline constexpr int kLongTermChannels = 3;
// Context inputs are divided by this and predicted means multiplied by it.
inline constexpr double kContextScale = 16.0;
inline constexpr int kContextOutputs = 3 * kMixtures;

// Per subband type t in {ll, hl, lh, hh}, under "ctx.<t>.":
//   s1: mask-A 3x3 conv on S_t (1 -> C), s2: mask-B 3x3 (C -> C)
//   l1: 3x3 on L_t (3 -> C), l2: 3x3 (C -> C)
//   f1: 1x1 on concat(s2, l2) (2C -> C), f2: 1x1 (C -> 3K)
// ReLU follows every layer but f2. f2 output channels are K mixture
// logits, K means and K log-sigmas; f2 starts with zero weights, zero
// means and sigma = kContextScale.
void AddContextWeights(ModelWeights& weights, int channels,
                       std::mt19937_64& rng, double stddev);
int ContextChannels(const ModelWeights& weights);

// Batched forward on S (N,1,H,W) and L (N,3,H,W), returning the raw
// (N,3K,H,W) outputs. Recorded when any input or weight is.
Tensor ContextRaw(const ModelWeights& weights, SubbandType type,
                  const Tensor& s, const Tensor& l);

// Mixture parameters from one position's raw outputs.
GmmParams MapRaw(std::span<const double> raw);

// Differentiable code length, in bits, of the values `v` (N,1,H,W) under
// the mixtures described by `raw`, summed over all elements. The mass of
// each value is taken over the unit bin around it.
Tensor RateBits(const Tensor& raw, const Tensor& v);

// Evaluates the context model one position at a time in raster order, so
// the decoder can interleave it with symbol decoding. The long-term path
// is evaluated for the whole grid up front.
class ContextEvaluator {
 public:
  // `long_term` is (1,3,H,W).
  ContextEvaluator(const ModelWeights& weights, SubbandType type,
                   const Tensor& long_term);

  // Parameters at (x, y). `s` must hold final values at every position
  // before (x, y) in raster order. Calls must follow raster order.
  GmmParams At(const Plane32& s, int x, int y);

 private:
  int c_, w_, h_;
  std::vector<double> s1w_, s1b_, s2w_, s2b_, f1s_, f2w_, f2b_;
  std::vector<double> f1_base_;  // f1 bias + long-term half, (C,H,W).
  std::vector<double> s1_;       // s1 activations, (H,W,C).
  std::vector<double> s2_, f1_, raw_;
};

// Long-term context for `target`: the grids of the same level that precede
// it in coding order, with LL of that level first. For levels below the
// coarsest, `ll_of_level(j)` supplies LL_j in symbol units. Missing grids
// are zeros. Shapes follow (N,1,h,w) of the target level.
Tensor LongTermContext(const Pyramid<Tensor>& symbols, SubbandId target,
                       const std::function<Tensor(int)>& ll_of_level);

}  // namespace iwv3

#endif  // IWV3_CONTEXT_MODEL_H_
